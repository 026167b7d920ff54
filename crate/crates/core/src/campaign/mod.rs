//! Monte-Carlo fault-injection campaigns.
//!
//! For every array size the workload is calibrated once; iteration `i` then
//! draws its stimulus and its fault from substreams keyed by `i`, so the
//! records do not depend on how iterations are spread over workers. Results
//! are merged into per-group tallies whose merge is commutative, and raw
//! records are appended in iteration order so an interrupted campaign can
//! be resumed from its last complete record.

pub mod plot;
pub mod records;
pub mod stats;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fault::{sample_fault, FaultExecutor, Utilisation};
use crate::pipeline::PipelineConfig;
use crate::registry::{build_registry, Geometry, Registry, RegistryCensus};
use crate::reliability::{seu_table, SerContext, SeuTable, DEFAULT_CLOCK_HZ, GEO_SER_PER_FF_DAY};
use crate::rng::{substream, Purpose, NORMAL_ID, PRNG_ID};
use crate::stimulus::{
    calibrate_workload, generate_train, Calibration, StimulusParams, DEFAULT_CALIBRATION_SAMPLES,
    MIN_CALIBRATION_SAMPLES,
};

pub use records::{
    read_records, records_path, FaultRecord, RecordFile, RecordWriter, RecordsHeader, Size,
};
pub use stats::{wilson_interval, GroupStats, GroupTally, MagnitudeSummary, SizeTally, Z95};

pub const REPORT_FILE: &str = "report.json";
pub const DESK_ITERATIONS: u64 = 100_000;
pub const LONG_ITERATIONS: u64 = 10_000_000;
/// Iterations simulated between two flushes of the record file.
const CHUNK: u64 = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub sizes: Vec<Size>,
    /// Injections per size.
    pub iterations: u64,
    pub seed: u64,
    pub passes: usize,
    pub calibration_samples: usize,
    /// 0 selects the available hardware parallelism.
    pub workers: usize,
    pub output: Option<PathBuf>,
    pub utilisation: Utilisation,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            sizes: vec![Size::new(2, 2), Size::new(4, 4), Size::new(8, 8)],
            iterations: DESK_ITERATIONS,
            seed: 1,
            passes: 1,
            calibration_samples: DEFAULT_CALIBRATION_SAMPLES,
            workers: 0,
            output: None,
            utilisation: Utilisation::default(),
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one array size is required".into(),
            ));
        }
        for (i, s) in self.sizes.iter().enumerate() {
            Geometry::new(s.rows, s.cols)?;
            if self.sizes[..i].contains(s) {
                return Err(Error::InvalidArgument(format!("size {s} listed twice")));
            }
        }
        if self.iterations == 0 {
            return Err(Error::NonPositive("iterations"));
        }
        if self.passes == 0 {
            return Err(Error::ZeroPasses);
        }
        if self.calibration_samples < MIN_CALIBRATION_SAMPLES {
            return Err(Error::InvalidArgument(format!(
                "calibration needs at least {MIN_CALIBRATION_SAMPLES} samples, got {}",
                self.calibration_samples
            )));
        }
        Ok(())
    }

    /// Whether two configurations produce the same records; worker count
    /// and output location do not matter.
    pub fn same_experiment(&self, other: &CampaignConfig) -> std::result::Result<(), String> {
        let checks: [(&str, bool); 6] = [
            ("seed", self.seed == other.seed),
            ("sizes", self.sizes == other.sizes),
            ("iterations", self.iterations == other.iterations),
            ("passes", self.passes == other.passes),
            (
                "calibration_samples",
                self.calibration_samples == other.calibration_samples,
            ),
            ("utilisation", self.utilisation == other.utilisation),
        ];
        match checks.iter().find(|(_, same)| !same) {
            None => Ok(()),
            Some((field, _)) => Err(format!("{field} differs from the record file header")),
        }
    }

    fn workers(&self) -> usize {
        if self.workers == 0 {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            self.workers
        }
    }
}

/// Per-size workload calibration and injection schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeCalibration {
    pub size: Size,
    pub calibration: Calibration,
    /// Cycles of the window faults are drawn in.
    pub window: u32,
    /// Iterations simulated per injection, and which one is targeted.
    pub train: usize,
    pub target: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SizeCensus {
    pub size: Size,
    pub census: RegistryCensus,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportHeader {
    pub tool: String,
    pub config: CampaignConfig,
    pub prng: String,
    pub normal: String,
    pub calibrations: Vec<SizeCalibration>,
    pub census: Vec<SizeCensus>,
    pub poisson: SeuTable,
    pub records: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeReport {
    pub size: Size,
    pub injections: u64,
    pub groups: Vec<GroupStats>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CampaignReport {
    pub header: ReportHeader,
    pub sizes: Vec<SizeReport>,
    /// Exact tallies behind `sizes`, in the same order.
    #[serde(skip)]
    pub tallies: Vec<SizeTally>,
}

impl CampaignReport {
    /// The aggregated statistics alone, as written to the report file.
    pub fn body_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.sizes)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn size(&self, size: Size) -> Option<(&SizeReport, &SizeTally)> {
        let i = self.sizes.iter().position(|s| s.size == size)?;
        Some((&self.sizes[i], &self.tallies[i]))
    }
}

struct SizePlan {
    cal: SizeCalibration,
    params: StimulusParams,
    pipeline: PipelineConfig,
    registry: Registry,
}

fn plan(config: &CampaignConfig, size: Size) -> Result<SizePlan> {
    let calibration = calibrate_workload(
        size.rows,
        size.cols,
        config.passes,
        config.calibration_samples,
        config.seed,
    )?;
    let params =
        StimulusParams::from_calibration(size.rows, size.cols, config.passes, &calibration)?;
    let pipeline = PipelineConfig::new(size.rows, size.cols, config.passes, calibration.shift)?;
    let (train, target) = config.utilisation.train(&pipeline);
    Ok(SizePlan {
        cal: SizeCalibration {
            size,
            calibration,
            window: pipeline.window(),
            train,
            target,
        },
        params,
        registry: build_registry(size.rows, size.cols)?,
        pipeline,
    })
}

/// Record of injection `iteration` of one size.
fn inject(executor: &mut FaultExecutor, plan: &SizePlan, iteration: u64) -> Result<FaultRecord> {
    let stimulus = generate_train(&plan.params, iteration, plan.cal.train, plan.cal.target)?;
    let mut rng = substream(
        plan.params.seed,
        Purpose::Fault,
        plan.registry.geometry(),
        iteration,
    );
    let spec = sample_fault(&plan.registry, plan.cal.window, &mut rng);
    let outcome = executor.run_with_fault(&stimulus, spec)?;
    Ok(FaultRecord::new(plan.cal.size, iteration, &outcome))
}

fn pool(config: &CampaignConfig) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers())
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))
}

fn run_chunk(
    pool: &rayon::ThreadPool,
    config: &CampaignConfig,
    plan: &SizePlan,
    range: std::ops::Range<u64>,
) -> Result<Vec<FaultRecord>> {
    pool.install(|| {
        range
            .into_par_iter()
            .map_init(
                || FaultExecutor::new(plan.pipeline.clone(), config.utilisation),
                |ex, i| inject(ex, plan, i),
            )
            .collect()
    })
}

/// Runs a campaign from scratch. With an output directory, records, the
/// report and plot data are written there.
pub fn run_campaign(config: &CampaignConfig) -> Result<CampaignReport> {
    config.validate()?;
    let plans = config
        .sizes
        .iter()
        .map(|&s| plan(config, s))
        .collect::<Result<Vec<_>>>()?;
    let header = RecordsHeader {
        config: config.clone(),
        calibrations: plans.iter().map(|p| p.cal).collect(),
    };
    let writer = match &config.output {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            Some(RecordWriter::create(&records_path(dir), &header)?)
        }
        None => None,
    };
    let tallies = vec![SizeTally::default(); plans.len()];
    execute(config, &plans, tallies, vec![0; plans.len()], writer)
}

/// Continues the campaign whose records live in `config.output`. The
/// record file header must describe the same experiment.
pub fn resume(config: &CampaignConfig) -> Result<CampaignReport> {
    config.validate()?;
    let dir = config
        .output
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("resume needs an output directory".into()))?;
    let path = records_path(dir);
    let file = read_records(&path, true)?;
    config
        .same_experiment(&file.header.config)
        .map_err(Error::ResumeMismatch)?;
    let plans = config
        .sizes
        .iter()
        .map(|&s| plan(config, s))
        .collect::<Result<Vec<_>>>()?;
    if file.header.calibrations != plans.iter().map(|p| p.cal).collect::<Vec<_>>() {
        return Err(Error::ResumeMismatch(
            "calibration differs from the record file header".into(),
        ));
    }
    let tallies = tally_by_config(config, &file.records);
    let done = file.watermark().into_iter().map(|(_, n)| n).collect();
    let writer = RecordWriter::append(&path)?;
    execute(config, &plans, tallies, done, Some(writer))
}

fn execute(
    config: &CampaignConfig,
    plans: &[SizePlan],
    mut tallies: Vec<SizeTally>,
    done: Vec<u64>,
    mut writer: Option<RecordWriter>,
) -> Result<CampaignReport> {
    let pool = pool(config)?;
    for ((plan, tally), &start) in plans.iter().zip(&mut tallies).zip(&done) {
        let mut next = start;
        while next < config.iterations {
            let end = (next + CHUNK).min(config.iterations);
            let interrupted = |source: Error| Error::Interrupted {
                size: plan.cal.size.to_string(),
                completed: next,
                source: Box::new(source),
            };
            let records = run_chunk(&pool, config, plan, next..end).map_err(interrupted)?;
            if let Some(w) = writer.as_mut() {
                records
                    .iter()
                    .try_for_each(|r| w.write(r))
                    .and_then(|_| w.flush())
                    .map_err(interrupted)?;
            }
            for r in &records {
                tally.record(r.group, r.propagated, r.magnitude);
            }
            next = end;
        }
    }
    let header = RecordsHeader {
        config: config.clone(),
        calibrations: plans.iter().map(|p| p.cal).collect(),
    };
    let report = build_report(
        &header,
        tallies,
        config.output.as_ref().map(|d| records_path(d)),
    )?;
    if let Some(dir) = &config.output {
        write_outputs(dir, &report)?;
    }
    Ok(report)
}

fn tally_by_config(config: &CampaignConfig, records: &[FaultRecord]) -> Vec<SizeTally> {
    let mut by_size = tally(records);
    config
        .sizes
        .iter()
        .map(|s| by_size.remove(s).unwrap_or_default())
        .collect()
}

fn tally(records: &[FaultRecord]) -> BTreeMap<Size, SizeTally> {
    let mut out: BTreeMap<Size, SizeTally> = BTreeMap::new();
    for r in records {
        out.entry(r.size)
            .or_default()
            .record(r.group, r.propagated, r.magnitude);
    }
    out
}

/// Per-size statistics of an arbitrary record set, ordered by size.
pub fn aggregate(records: &[FaultRecord]) -> Result<Vec<SizeReport>> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    tally(records)
        .into_iter()
        .map(|(size, t)| size_report(size, &t))
        .collect()
}

fn size_report(size: Size, tally: &SizeTally) -> Result<SizeReport> {
    let census = RegistryCensus::from_geometry(&Geometry::new(size.rows, size.cols)?);
    Ok(SizeReport {
        size,
        injections: tally.injections(),
        groups: tally.stats(&census),
    })
}

/// Rebuilds the full report from a record file without simulating.
pub fn report_from_records(file: &RecordFile, records: Option<PathBuf>) -> Result<CampaignReport> {
    if file.records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let tallies = tally_by_config(&file.header.config, &file.records);
    build_report(&file.header, tallies, records)
}

fn build_report(
    header: &RecordsHeader,
    tallies: Vec<SizeTally>,
    records: Option<PathBuf>,
) -> Result<CampaignReport> {
    let config = &header.config;
    let census = config
        .sizes
        .iter()
        .map(|&size| {
            Ok(SizeCensus {
                size,
                census: RegistryCensus::from_geometry(&Geometry::new(size.rows, size.cols)?),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let contexts = census
        .iter()
        .map(|c| SerContext::new(GEO_SER_PER_FF_DAY, DEFAULT_CLOCK_HZ, c.census.total()))
        .collect::<Result<Vec<_>>>()?;
    let sizes = config
        .sizes
        .iter()
        .zip(&tallies)
        .map(|(&s, t)| size_report(s, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(CampaignReport {
        header: ReportHeader {
            tool: concat!("sa-seu ", env!("CARGO_PKG_VERSION")).to_string(),
            config: config.clone(),
            prng: PRNG_ID.to_string(),
            normal: NORMAL_ID.to_string(),
            calibrations: header.calibrations.clone(),
            census,
            poisson: seu_table(&contexts, 2)?,
            records,
        },
        sizes,
        tallies,
    })
}

/// Writes the report and per-size plot data into `dir`.
pub fn write_outputs(dir: &Path, report: &CampaignReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(REPORT_FILE), report.to_json()? + "\n")?;
    plot::write_plot_data(dir, report)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(iterations: u64) -> CampaignConfig {
        CampaignConfig {
            sizes: vec![Size::new(2, 2)],
            iterations,
            seed: 7,
            calibration_samples: MIN_CALIBRATION_SAMPLES,
            workers: 2,
            ..CampaignConfig::default()
        }
    }

    #[test]
    fn single_iteration_campaign() {
        let report = run_campaign(&small(1)).unwrap();
        assert_eq!(report.sizes.len(), 1);
        let total: u64 = report.sizes[0].groups.iter().map(|g| g.injections).sum();
        assert_eq!(total, 1);
    }

    #[test]
    fn worker_count_does_not_change_the_body() {
        let mut one = small(300);
        one.workers = 1;
        let mut many = small(300);
        many.workers = 8;
        let a = run_campaign(&one).unwrap();
        let b = run_campaign(&many).unwrap();
        assert_eq!(a.body_json().unwrap(), b.body_json().unwrap());
    }

    #[test]
    fn aggregate_is_order_invariant_and_rejects_empty() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(200);
        cfg.output = Some(dir.path().to_path_buf());
        let report = run_campaign(&cfg).unwrap();
        let file = read_records(&records_path(dir.path()), false).unwrap();
        assert_eq!(file.records.len(), 200);
        let mut shuffled = file.records.clone();
        shuffled.reverse();
        shuffled.swap(3, 150);
        assert_eq!(
            aggregate(&file.records).unwrap(),
            aggregate(&shuffled).unwrap()
        );
        assert_eq!(aggregate(&file.records).unwrap(), report.sizes);
        assert!(matches!(aggregate(&[]), Err(Error::EmptyRecords)));
    }

    #[test]
    fn resume_after_truncation_matches_uninterrupted_run() {
        let full_dir = tempfile::tempdir().unwrap();
        let mut cfg = small(CHUNK + 500);
        cfg.sizes.push(Size::new(1, 3));
        cfg.output = Some(full_dir.path().to_path_buf());
        let full = run_campaign(&cfg).unwrap();

        let cut_dir = tempfile::tempdir().unwrap();
        let text = fs::read_to_string(records_path(full_dir.path())).unwrap();
        // keep the header and roughly half the records, ending mid-line
        let cut = text.len() / 2;
        fs::write(records_path(cut_dir.path()), &text[..cut]).unwrap();
        let mut resumed_cfg = cfg.clone();
        resumed_cfg.output = Some(cut_dir.path().to_path_buf());
        resumed_cfg.workers = 3;
        let resumed = resume(&resumed_cfg).unwrap();
        assert_eq!(resumed.body_json().unwrap(), full.body_json().unwrap());
        assert_eq!(
            fs::read_to_string(records_path(cut_dir.path())).unwrap(),
            text
        );

        // resuming a complete file changes nothing
        let again = resume(&resumed_cfg).unwrap();
        assert_eq!(again.body_json().unwrap(), full.body_json().unwrap());

        let mut other_seed = resumed_cfg.clone();
        other_seed.seed += 1;
        assert!(matches!(resume(&other_seed), Err(Error::ResumeMismatch(_))));
    }

    #[test]
    fn corrupt_record_reports_watermark() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(50);
        cfg.output = Some(dir.path().to_path_buf());
        run_campaign(&cfg).unwrap();
        let path = records_path(dir.path());
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        let body = lines
            .iter()
            .position(|l| *l == records::CSV_HEADER)
            .unwrap()
            + 1;
        let mut broken: Vec<String> = lines.iter().map(|s| s.to_string()).collect();
        broken[body + 20] = "2x2,20,no-such-group,0,0,0,0,0,0,0".into();
        fs::write(&path, broken.join("\n") + "\n").unwrap();
        match read_records(&path, false) {
            Err(Error::CorruptRecords { watermark, .. }) => {
                assert_eq!(watermark, vec![("2x2".to_string(), 20)])
            }
            other => panic!("expected corrupt-record error, got {other:?}"),
        }
    }

    #[test]
    fn report_from_records_reproduces_inline_report() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(400);
        cfg.output = Some(dir.path().to_path_buf());
        let inline = run_campaign(&cfg).unwrap();
        let file = read_records(&records_path(dir.path()), false).unwrap();
        let rebuilt = report_from_records(&file, inline.header.records.clone()).unwrap();
        assert_eq!(rebuilt.to_json().unwrap(), inline.to_json().unwrap());
        assert!(dir.path().join(REPORT_FILE).exists());
        assert!(dir.path().join("bars_2x2.csv").exists());
        assert!(dir.path().join("boxes_2x2.csv").exists());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = small(0);
        assert!(run_campaign(&c).is_err());
        c.iterations = 1;
        c.sizes.push(Size::new(2, 2));
        assert!(run_campaign(&c).is_err());
        c.sizes = vec![];
        assert!(run_campaign(&c).is_err());
        let mut c = small(1);
        c.calibration_samples = 10;
        assert!(run_campaign(&c).is_err());
    }

    #[test]
    fn size_parsing() {
        assert_eq!("8x4".parse::<Size>().unwrap(), Size::new(8, 4));
        assert!("8".parse::<Size>().is_err());
        assert!("0x4".parse::<Size>().is_err());
    }
}
