use proptest::prelude::*;
use sa_seu_core::fault::{FaultExecutor, FaultSpec, Utilisation};
use sa_seu_core::golden::{gemm_accumulate, golden_forward_with};
use sa_seu_core::pipeline::{run_iteration, Pipeline};
use sa_seu_core::quant::{quantize_to_int8, round_shift, round_shift_clip, Int8Range};
use sa_seu_core::stimulus::Stimulus;
use sa_seu_core::{
    build_registry, golden_forward, ActivationVector, FlipFlopId, NlfTable, PipelineConfig,
    Pow2Scale, RegGroup, ShiftAmount, Tile,
};

/// Round-half-away-from-zero of `acc / 2^s`, computed on magnitudes.
fn oracle_round(acc: i32, s: u8) -> i128 {
    let d = 1i128 << s;
    let m = (acc as i128).abs();
    let q = m / d + i128::from(2 * (m % d) >= d);
    if acc < 0 {
        -q
    } else {
        q
    }
}

fn shift() -> impl Strategy<Value = ShiftAmount> {
    (0u8..=31).prop_map(|s| ShiftAmount::new(s).unwrap())
}

prop_compose! {
    fn tile_and_acts(max_dim: usize, max_passes: usize)
        (rows in 1..=max_dim, cols in 1..=max_dim, passes in 1..=max_passes, s in 0u8..=16)
        (weights in prop::collection::vec(any::<i8>(), rows * cols),
         biases in prop::collection::vec(-(1i32 << 20)..(1 << 20), cols),
         acts in prop::collection::vec(prop::collection::vec(any::<i8>(), rows), passes),
         rows in Just(rows), cols in Just(cols), s in Just(s))
        -> (Tile, Vec<ActivationVector>)
    {
        let tile = Tile::new(rows, cols, weights, biases, ShiftAmount::new(s).unwrap()).unwrap();
        (tile, acts.into_iter().map(ActivationVector).collect())
    }
}

proptest! {
    #[test]
    fn requantization_matches_oracle(acc in any::<i32>(), s in shift()) {
        let exact = oracle_round(acc, s.get());
        prop_assert_eq!(round_shift(acc, s) as i128, exact);
        prop_assert_eq!(round_shift_clip(acc, s) as i128, exact.clamp(-128, 127));
    }

    #[test]
    fn requantization_is_monotone(a in any::<i32>(), b in any::<i32>(), s in shift()) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(round_shift_clip(lo, s) <= round_shift_clip(hi, s));
    }

    #[test]
    fn requantization_is_odd(acc in (i32::MIN + 1)..=i32::MAX, s in shift()) {
        prop_assert_eq!(round_shift(-acc, s), -round_shift(acc, s));
    }

    #[test]
    fn quantization_stays_in_range(x in prop::num::f64::ANY, e in -20i32..20) {
        let q = quantize_to_int8(x, Pow2Scale::from_exponent(e)) as i64;
        prop_assert!((Int8Range::LO..=Int8Range::HI).contains(&q));
    }

    #[test]
    fn pipeline_matches_golden((tile, acts) in tile_and_acts(6, 3)) {
        let cfg = PipelineConfig::new(tile.rows(), tile.cols(), acts.len(), tile.shift()).unwrap();
        let (out, cycles) = run_iteration(&cfg, &tile, &acts).unwrap();
        prop_assert_eq!(out, golden_forward(&tile, &acts).unwrap());
        prop_assert_eq!(cycles, cfg.window());
    }

    #[test]
    fn identity_table_exposes_requantized_sums((tile, acts) in tile_and_acts(5, 2)) {
        let nlf = NlfTable::identity();
        let cfg = PipelineConfig::new(tile.rows(), tile.cols(), acts.len(), tile.shift()).unwrap().with_nlf(nlf.clone());
        let mut p = Pipeline::new(cfg);
        let (out, _) = p.run_iteration(&tile, &acts).unwrap();
        let acc = gemm_accumulate(&tile, &acts).unwrap();
        let expected: Vec<i8> = acc.iter().map(|&a| round_shift_clip(a, tile.shift())).collect();
        prop_assert_eq!(out.values(), &expected[..]);
        prop_assert_eq!(out, golden_forward_with(&tile, &acts, &nlf).unwrap());
    }

    #[test]
    fn golden_commutes_with_row_permutation((tile, acts) in tile_and_acts(6, 3), seed in any::<u64>()) {
        let rows = tile.rows();
        let mut perm: Vec<usize> = (0..rows).collect();
        let mut x = seed;
        for i in (1..rows).rev() {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (x >> 33) as usize % (i + 1));
        }
        let weights: Vec<i8> = (0..rows * tile.cols())
            .map(|k| tile.weight(perm[k / tile.cols()], k % tile.cols()))
            .collect();
        let permuted = Tile::new(rows, tile.cols(), weights, tile.biases().to_vec(), tile.shift()).unwrap();
        let acts_p: Vec<ActivationVector> = acts
            .iter()
            .map(|a| ActivationVector(perm.iter().map(|&r| a.0[r]).collect()))
            .collect();
        prop_assert_eq!(golden_forward(&tile, &acts).unwrap(), golden_forward(&permuted, &acts_p).unwrap());
    }

    #[test]
    fn registry_is_a_bijection(rows in 1usize..7, cols in 1usize..7) {
        let reg = build_registry(rows, cols).unwrap();
        prop_assert_eq!(reg.len() as u64, reg.census().total());
        for (i, ff) in reg.ids().iter().enumerate() {
            prop_assert_eq!(reg.index_of(ff), Some(i));
        }
        if rows == cols {
            let wide: u64 = RegGroup::ALL.iter().filter(|g| g.width() == 32).map(|&g| reg.census().bits(g)).sum();
            prop_assert!(2 * wide > reg.census().total());
        }
    }

    #[test]
    fn flip_is_an_involution(rows in 1usize..5, cols in 1usize..5, pick in any::<prop::sample::Index>(), value in any::<i32>()) {
        let reg = build_registry(rows, cols).unwrap();
        let ff = reg.get(pick.index(reg.len())).unwrap();
        let tile = Tile::zeros(rows, cols, ShiftAmount::new(0).unwrap()).unwrap();
        let cfg = PipelineConfig::new(rows, cols, 1, tile.shift()).unwrap();
        let mut state = Pipeline::new(cfg).state().clone();
        state.reset_and_preload(&tile).unwrap();
        state.set(ff.group, ff.row, ff.col, ff.chain_pos, value).unwrap();
        let before = state.clone();
        state.flip_bit(&ff).unwrap();
        prop_assert_ne!(&state, &before);
        state.flip_bit(&ff).unwrap();
        prop_assert_eq!(state, before);
    }
}

fn isolated_stimulus(tile: Tile, acts: Vec<ActivationVector>) -> Stimulus {
    Stimulus {
        tile,
        batches: vec![acts],
        target: 0,
        iteration: 0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn round_register_faults_are_bounded(
        (tile, acts) in tile_and_acts(4, 2), bit in 0u8..8, col in any::<prop::sample::Index>(), cycle in any::<prop::sample::Index>()
    ) {
        let cfg = PipelineConfig::new(tile.rows(), tile.cols(), acts.len(), tile.shift()).unwrap();
        let mut ex = FaultExecutor::new(cfg, Utilisation::Isolated);
        let spec = FaultSpec {
            ff: FlipFlopId { group: RegGroup::RoundReg, row: 0, col: col.index(tile.cols()), chain_pos: 0, bit },
            cycle: cycle.index(ex.window() as usize) as u32,
        };
        let o = ex.run_with_fault(&isolated_stimulus(tile, acts), spec).unwrap();
        prop_assert!(o.magnitude <= 1 << bit);
        prop_assert_eq!(o.propagated, o.magnitude > 0);
        prop_assert_eq!(o.propagated, o.deltas.iter().any(|&d| d != 0));
    }

    #[test]
    fn accumulator_faults_after_accumulation_are_bounded(
        (tile, acts) in tile_and_acts(4, 1), bit in 0u8..32, col in any::<prop::sample::Index>()
    ) {
        let cfg = PipelineConfig::new(tile.rows(), tile.cols(), 1, tile.shift()).unwrap();
        let mut ex = FaultExecutor::new(cfg, Utilisation::Isolated);
        // accumulation completes three cycles before readout
        let spec = FaultSpec {
            ff: FlipFlopId { group: RegGroup::AccumReg, row: 0, col: col.index(tile.cols()), chain_pos: 0, bit },
            cycle: ex.window() - 3,
        };
        let s = tile.shift().get();
        let o = ex.run_with_fault(&isolated_stimulus(tile, acts), spec).unwrap();
        let bound = (1u64 << bit) / (1u64 << s) + 1;
        prop_assert!(u64::from(o.magnitude) <= bound);
        prop_assert!(o.deltas.iter().enumerate().all(|(c, &d)| d == 0 || c == spec.ff.col));
    }

    #[test]
    fn early_weight_faults_stay_in_their_column(
        (tile, acts) in tile_and_acts(5, 3), bit in 0u8..8, r in any::<prop::sample::Index>(), c in any::<prop::sample::Index>()
    ) {
        let cfg = PipelineConfig::new(tile.rows(), tile.cols(), acts.len(), tile.shift()).unwrap();
        let mut ex = FaultExecutor::new(cfg, Utilisation::Isolated);
        let col = c.index(tile.cols());
        let spec = FaultSpec {
            ff: FlipFlopId { group: RegGroup::WReg, row: r.index(tile.rows()), col, chain_pos: 0, bit },
            cycle: 0,
        };
        let o = ex.run_with_fault(&isolated_stimulus(tile, acts), spec).unwrap();
        prop_assert!(o.deltas.iter().enumerate().all(|(k, &d)| d == 0 || k == col));
    }

    #[test]
    fn nlf_faults_at_readout_are_powers_of_two(
        (tile, acts) in tile_and_acts(4, 2), bit in 0u8..8, col in any::<prop::sample::Index>()
    ) {
        let cfg = PipelineConfig::new(tile.rows(), tile.cols(), acts.len(), tile.shift()).unwrap();
        let mut ex = FaultExecutor::new(cfg, Utilisation::Isolated);
        let spec = FaultSpec {
            ff: FlipFlopId { group: RegGroup::NlfReg, row: 0, col: col.index(tile.cols()), chain_pos: 0, bit },
            cycle: ex.window() - 1,
        };
        let o = ex.run_with_fault(&isolated_stimulus(tile, acts), spec).unwrap();
        prop_assert_eq!(o.magnitude, 1 << bit);
        prop_assert_eq!(o.deltas.iter().filter(|&&d| d != 0).count(), 1);
    }
}
