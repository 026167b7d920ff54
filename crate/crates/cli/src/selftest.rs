//! Quick built-in checks: reference equivalence, requantization against an
//! exact oracle, and the fault-model invariants.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sa_seu_core::fault::{sample_fault, FaultExecutor, FaultSpec, Utilisation};
use sa_seu_core::quant::round_shift_clip;
use sa_seu_core::stimulus::{calibrate_workload, generate_stimulus, StimulusParams};
use sa_seu_core::{
    build_registry, golden_forward, FlipFlopId, Pipeline, PipelineConfig, RegGroup, ShiftAmount,
};

pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn oracle(acc: i32, s: u8) -> i8 {
    let d = 1i128 << s;
    let m = (acc as i128).abs();
    let q = m / d + i128::from(2 * (m % d) >= d);
    (if acc < 0 { -q } else { q }).clamp(-128, 127) as i8
}

fn equivalence(stimuli: u64) -> anyhow::Result<Check> {
    let mut runs = 0u64;
    let mut mismatches = 0u64;
    for n in [2, 4, 8] {
        for passes in [1, 2] {
            let cal = calibrate_workload(n, n, passes, 2000, 1)?;
            let params = StimulusParams::from_calibration(n, n, passes, &cal)?;
            let mut pipe = Pipeline::new(PipelineConfig::new(n, n, passes, cal.shift)?);
            for i in 0..stimuli {
                let s = generate_stimulus(&params, i)?;
                let (out, _) = pipe.run_iteration(&s.tile, s.acts())?;
                mismatches += u64::from(out != golden_forward(&s.tile, s.acts())?);
                runs += 1;
            }
        }
    }
    Ok(Check {
        name: "golden-equivalence",
        pass: mismatches == 0,
        detail: format!("{mismatches} mismatches in {runs} runs"),
    })
}

fn requantization() -> Check {
    let mut mismatches = 0u64;
    let mut cases = 0u64;
    for s in [0u8, 1, 5, 7, 31] {
        let shift = ShiftAmount::new(s).expect("valid shift");
        for acc in -(1 << 16)..=(1 << 16) {
            mismatches += u64::from(round_shift_clip(acc, shift) != oracle(acc, s));
            cases += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100_000 {
        let acc: i32 = rng.random();
        let s = rng.random_range(0..=31u8);
        mismatches += u64::from(
            round_shift_clip(acc, ShiftAmount::new(s).expect("valid shift")) != oracle(acc, s),
        );
        cases += 1;
    }
    Check {
        name: "requantization-oracle",
        pass: mismatches == 0,
        detail: format!("{mismatches} mismatches in {cases} cases"),
    }
}

fn invariants(injections: u64) -> anyhow::Result<Check> {
    let cal = calibrate_workload(4, 4, 1, 2000, 1)?;
    let params = StimulusParams::from_calibration(4, 4, 1, &cal)?;
    let mut ex = FaultExecutor::new(
        PipelineConfig::new(4, 4, 1, cal.shift)?,
        Utilisation::Isolated,
    );
    let t = ex.window();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut violations = 0u64;
    for i in 0..injections {
        let stim = generate_stimulus(&params, i)?;
        let bit = rng.random_range(0..8u8);
        let col = rng.random_range(0..4);
        let ff = |group| FlipFlopId {
            group,
            row: 0,
            col,
            chain_pos: 0,
            bit,
        };
        let nlf = ex.run_with_fault(
            &stim,
            FaultSpec {
                ff: ff(RegGroup::NlfReg),
                cycle: t - 1,
            },
        )?;
        violations += u64::from(nlf.magnitude != 1 << bit);
        let round = ex.run_with_fault(
            &stim,
            FaultSpec {
                ff: ff(RegGroup::RoundReg),
                cycle: t - 2,
            },
        )?;
        violations += u64::from(round.magnitude > 1 << bit);
    }
    let reg = build_registry(2, 2)?;
    let mut counts = [0u64; 8];
    let draws = 200_000u64;
    for _ in 0..draws {
        counts[sample_fault(&reg, t, &mut rng).ff.group.index()] += 1;
    }
    let mut worst: f64 = 0.0;
    for g in RegGroup::ALL {
        let p = reg.census().ratio(g);
        let mean = draws as f64 * p;
        worst = worst.max((counts[g.index()] as f64 - mean).abs() / (mean * (1.0 - p)).sqrt());
    }
    Ok(Check {
        name: "fault-invariants",
        pass: violations == 0 && worst < 4.0,
        detail: format!("{violations} bound violations in {} targeted injections; sampling worst {worst:.2} sigma", 2 * injections),
    })
}

pub fn run(stimuli: u64) -> anyhow::Result<Vec<Check>> {
    Ok(vec![
        equivalence(stimuli)?,
        requantization(),
        invariants(stimuli)?,
    ])
}
