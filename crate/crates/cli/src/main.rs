//! `sa-seu`: calibration, upset-probability tables, fault-injection
//! campaigns and report rendering.

mod config;
mod selftest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use sa_seu_core::campaign::{
    self, plot, read_records, records_path, report_from_records, CampaignConfig, CampaignReport,
    Size, LONG_ITERATIONS,
};
use sa_seu_core::fault::Utilisation;
use sa_seu_core::reliability::{seu_table, SerContext, DEFAULT_CLOCK_HZ, GEO_SER_PER_FF_DAY};
use sa_seu_core::stimulus::{calibrate_workload, DEFAULT_CALIBRATION_SAMPLES};
use serde_json::json;

use config::{pick, require, FileConfig};

/// Invalid invocation or configuration; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

const DEFAULT_OUTPUT: &str = "sa-seu-out";

#[derive(Parser)]
#[command(
    name = "sa-seu",
    version,
    about = "Single-event-upset fault injection for a systolic-array accelerator pipeline"
)]
struct Cli {
    /// Flat TOML file whose keys mirror the flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Derive the power-of-two scales and the requantization shift.
    Calibrate(CalibrateArgs),
    /// Probability of k upsets per clock cycle.
    Poisson(PoissonArgs),
    /// Run (or resume) a fault-injection campaign.
    Run(RunArgs),
    /// Re-aggregate a record file into a report and plot data.
    Report(ReportArgs),
    /// Quick built-in consistency checks.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long)]
    passes: Option<usize>,
    /// Samples per distribution.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the record to this JSON file.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PoissonArgs {
    /// Upsets per flip-flop per day.
    #[arg(long)]
    ser: Option<f64>,
    /// Clock frequency in Hz.
    #[arg(long)]
    fclk: Option<f64>,
    /// Flip-flop counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    nff: Option<Vec<u64>>,
    #[arg(long)]
    kmax: Option<u32>,
}

#[derive(Args)]
struct RunArgs {
    /// Array sizes, e.g. `2x2,4x4,8x8`.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<Size>>,
    /// Injections per size.
    #[arg(long)]
    iters: Option<u64>,
    /// Use the long-mode injection count per size.
    #[arg(long, conflicts_with = "iters")]
    long: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    passes: Option<usize>,
    /// Calibration samples per distribution.
    #[arg(long)]
    samples: Option<usize>,
    /// Worker threads; 0 uses all available.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    output: Option<PathBuf>,
    /// `streaming` or `isolated`.
    #[arg(long)]
    utilisation: Option<Utilisation>,
    /// Continue an interrupted campaign in the output directory.
    #[arg(long)]
    resume: bool,
    /// Also render the plot data as SVG.
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Record file, or a directory containing one.
    #[arg(long)]
    input: PathBuf,
    /// Output directory; defaults to the record file's directory.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
struct SelftestArgs {
    /// Random stimuli per configuration.
    #[arg(long, default_value_t = 500)]
    stimuli: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let usage = err.chain().any(|e| {
        e.is::<UsageError>()
            || e.downcast_ref::<sa_seu_core::Error>()
                .is_some_and(|e| e.is_invalid_input())
    });
    if usage {
        2
    } else {
        1
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Calibrate(a) => calibrate(a, &file),
        Command::Poisson(a) => poisson(a, &file),
        Command::Run(a) => run_campaign(a, &file),
        Command::Report(a) => report(a),
        Command::Selftest(a) => selftest(a),
    }
}

fn calibrate(a: CalibrateArgs, file: &FileConfig) -> anyhow::Result<ExitCode> {
    let rows = require(a.rows, &file.rows, "rows")?;
    let cols = require(a.cols, &file.cols, "cols")?;
    let passes = pick(a.passes, &file.passes, 1);
    let samples = pick(a.samples, &file.samples, DEFAULT_CALIBRATION_SAMPLES);
    let seed = pick(a.seed, &file.seed, 1);
    let cal = calibrate_workload(rows, cols, passes, samples, seed)?;
    let record = json!({
        "config": { "rows": rows, "cols": cols, "passes": passes, "samples": samples, "seed": seed },
        "s_a": cal.s_a.value(),
        "s_w": cal.s_w.value(),
        "s_y": cal.s_y.value(),
        "s_a_exponent": cal.s_a.exponent(),
        "s_w_exponent": cal.s_w.exponent(),
        "s_y_exponent": cal.s_y.exponent(),
        "shift": cal.shift.get(),
    });
    let text = serde_json::to_string_pretty(&record)?;
    println!("{text}");
    if let Some(path) = a.output.or_else(|| file.output.clone()) {
        std::fs::write(&path, text + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn poisson(a: PoissonArgs, file: &FileConfig) -> anyhow::Result<ExitCode> {
    let ser = pick(a.ser, &file.ser, GEO_SER_PER_FF_DAY);
    let fclk = pick(a.fclk, &file.fclk, DEFAULT_CLOCK_HZ);
    let nff = require(a.nff, &file.nff, "nff")?;
    let kmax = pick(a.kmax, &file.kmax, 2);
    if nff.is_empty() {
        return Err(UsageError("--nff needs at least one flip-flop count".into()).into());
    }
    let contexts = nff
        .iter()
        .map(|&n| SerContext::new(ser, fclk, n))
        .collect::<Result<Vec<_>, _>>()?;
    let table = seu_table(&contexts, kmax)?;
    println!("# ser={ser:e} per FF per day, fclk={fclk:e} Hz, kmax={kmax}");
    print!("{table}");
    Ok(ExitCode::SUCCESS)
}

fn campaign_config(a: &RunArgs, file: &FileConfig) -> anyhow::Result<CampaignConfig> {
    let defaults = CampaignConfig::default();
    let sizes = match (&a.sizes, &file.sizes) {
        (Some(s), _) => s.clone(),
        (None, Some(s)) => s.iter().map(|s| s.parse()).collect::<Result<_, _>>()?,
        (None, None) => defaults.sizes,
    };
    let utilisation = match (a.utilisation, &file.utilisation) {
        (Some(u), _) => u,
        (None, Some(u)) => u.parse()?,
        (None, None) => defaults.utilisation,
    };
    let iterations = if a.long {
        LONG_ITERATIONS
    } else {
        pick(a.iters, &file.iters, defaults.iterations)
    };
    Ok(CampaignConfig {
        sizes,
        iterations,
        seed: pick(a.seed, &file.seed, defaults.seed),
        passes: pick(a.passes, &file.passes, defaults.passes),
        calibration_samples: pick(a.samples, &file.samples, defaults.calibration_samples),
        workers: pick(a.workers, &file.workers, defaults.workers),
        output: Some(pick(
            a.output.clone(),
            &file.output,
            PathBuf::from(DEFAULT_OUTPUT),
        )),
        utilisation,
    })
}

fn print_summary(report: &CampaignReport) {
    for size in &report.sizes {
        println!("{} ({} injections)", size.size, size.injections);
        println!(
            "  {:<18} {:>8} {:>10} {:>10} {:>19} {:>8}",
            "group", "ff_ratio", "injections", "propagated", "ratio [95% CI]", "median"
        );
        for g in &size.groups {
            let median = g
                .magnitude
                .map_or("-".to_string(), |m| m.median.to_string());
            println!(
                "  {:<18} {:>8.4} {:>10} {:>10} {:>6.4} [{:.4},{:.4}] {:>8}",
                g.group.name(),
                g.ff_ratio,
                g.injections,
                g.propagations,
                g.propagation_ratio,
                g.propagation_ci95[0],
                g.propagation_ci95[1],
                median
            );
        }
    }
}

fn finish(report: &CampaignReport, dir: &Path, svg: bool) -> anyhow::Result<ExitCode> {
    if svg {
        plot::write_svg(dir, report)?;
    }
    print_summary(report);
    println!(
        "report written to {}",
        dir.join(campaign::REPORT_FILE).display()
    );
    Ok(ExitCode::SUCCESS)
}

fn run_campaign(a: RunArgs, file: &FileConfig) -> anyhow::Result<ExitCode> {
    let cfg = campaign_config(&a, file)?;
    let dir = cfg.output.clone().expect("output directory is always set");
    let report = if a.resume {
        campaign::resume(&cfg)?
    } else {
        campaign::run_campaign(&cfg)?
    };
    finish(&report, &dir, a.svg || file.svg.unwrap_or(false))
}

fn report(a: ReportArgs) -> anyhow::Result<ExitCode> {
    let path = if a.input.is_dir() {
        records_path(&a.input)
    } else {
        a.input.clone()
    };
    let records =
        read_records(&path, false).with_context(|| format!("reading {}", path.display()))?;
    let report = report_from_records(&records, Some(path.clone()))?;
    let dir = a.output.unwrap_or_else(|| {
        path.parent()
            .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
    });
    campaign::write_outputs(&dir, &report)?;
    finish(&report, &dir, a.svg)
}

fn selftest(a: SelftestArgs) -> anyhow::Result<ExitCode> {
    let checks = selftest::run(a.stimuli)?;
    for c in &checks {
        println!(
            "{} {:<22} {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    Ok(if checks.iter().all(|c| c.pass) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
