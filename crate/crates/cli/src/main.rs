//! `seqdrift`: calibrate, run and evaluate sequential shift detectors.

mod config;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use seqdrift_core::calibration::Provenance;
use seqdrift_core::detector::{run, write_trace_csv};
use seqdrift_core::evaluation::{
    estimate_arl0, estimate_delay, fixed_threshold_slackness, write_runs_csv, write_sweep_csv, DelayReport,
    MonteCarlo, RunLengthReport, SweepRow,
};
use seqdrift_core::exec::with_workers;
use seqdrift_core::seed::STREAM_DEPLOY;
use seqdrift_core::streams::read_stream;
use seqdrift_core::summaries::Instance;
use seqdrift_core::{derive_seed, StreamSeed};

use config::{canonical_hash, ExperimentConfig};

#[derive(Parser)]
#[command(name = "seqdrift", version, about = "Sequential distribution-shift detection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the threshold schedule and write schedule.json.
    Calibrate(Common),
    /// Run one detector over one stream and write result.json (and trace.csv).
    Run {
        #[command(flatten)]
        common: Common,
        /// Stream file to monitor instead of a stream generated from the config.
        #[arg(long)]
        stream: Option<PathBuf>,
        /// Also write the per-step trace.
        #[arg(long)]
        trace: bool,
    },
    /// Estimate run length to false detection on null streams.
    Arl(Common),
    /// Estimate detection delay after the configured change point.
    Delay(Common),
    /// Fixed-threshold slackness sweeps over window size and reference size.
    ReproduceAppendix {
        /// Multiplies the significance level (1.0 is alpha = 0.001).
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Runs per grid point.
        #[arg(long, default_value_t = 250)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; never changes results.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Loaded config plus everything derived from the command line.
struct Session {
    config: ExperimentConfig,
    base: PathBuf,
    seed: u64,
    out: PathBuf,
    provenance: Provenance,
}

impl Common {
    fn load(&self) -> Result<Session> {
        let (mut config, base) = ExperimentConfig::load(&self.config)?;
        let seed = self.seed.or(config.seed).context("no seed: pass --seed or set `seed` in the config")?;
        config.seed = Some(seed);
        let out = self
            .out
            .clone()
            .or_else(|| config.output.dir.as_ref().map(|d| base.join(d)))
            .unwrap_or_else(|| PathBuf::from("out"));
        fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
        let provenance = Provenance { config_hash: config.hash(), seed };
        Ok(Session { config, base, seed, out, provenance })
    }
}

#[derive(Serialize)]
struct Document<'a, R: Serialize> {
    provenance: &'a Provenance,
    config: &'a ExperimentConfig,
    #[serde(flatten)]
    body: R,
}

fn write_json<R: Serialize>(path: &Path, ctx: &Session, body: R) -> Result<()> {
    let doc = Document { provenance: &ctx.provenance, config: &ctx.config, body };
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

fn calibrate(ctx: &Session) -> Result<()> {
    let c = &ctx.config;
    let reference = c.reference_set(&ctx.base, ctx.seed)?;
    let kernel = c.kernel(&reference)?;
    let schedule = c.schedule(&ctx.base, &reference, kernel.as_ref(), c.detector.w, ctx.seed)?;
    let path = ctx.out.join("schedule.json");
    let mut text = schedule.to_json(Some(ctx.provenance.clone()));
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run_once(ctx: &Session, stream: Option<&Path>, trace: bool) -> Result<()> {
    let c = &ctx.config;
    let reference = Arc::new(c.reference_set(&ctx.base, ctx.seed)?);
    let kernel = c.kernel(&reference)?;
    let schedule = c.schedule(&ctx.base, &reference, kernel.as_ref(), c.detector.w, ctx.seed)?;
    let detector = c.detector(reference, kernel, c.detector.w, schedule)?;
    let cap = c.cap(detector.schedule().alpha().or(c.alpha()))?;
    let result = match stream {
        Some(path) => {
            let file = File::open(path).with_context(|| format!("cannot open stream {}", path.display()))?;
            let xs = read_stream::<f64, _>(BufReader::new(file))
                .with_context(|| format!("reading stream {}", path.display()))?;
            run(&detector, xs.into_iter().map(Instance::from), cap, trace)?
        }
        None => {
            let model = c.model()?;
            let seed = StreamSeed::new(ctx.seed, STREAM_DEPLOY);
            run(&detector, model.iter(seed).map(Instance::from), cap, trace)?
        }
    };

    #[derive(Serialize)]
    struct Body {
        #[serde(rename = "T")]
        t: u64,
        detection_time: Option<u64>,
        censored: bool,
        steps: u64,
        cap: u64,
    }
    let body = Body {
        t: result.run_length(),
        detection_time: result.detection_time,
        censored: result.censored,
        steps: result.steps,
        cap,
    };
    write_json(&ctx.out.join("result.json"), ctx, body)?;
    if let Some(rows) = &result.trace {
        let mut w = create(&ctx.out.join("trace.csv"))?;
        write_trace_csv(&mut w, rows, Some(&ctx.provenance))?;
        w.flush()?;
    }
    match result.detection_time {
        Some(t) => println!("detection at t={t}"),
        None => println!("no detection in {} steps (censored)", result.steps),
    }
    Ok(())
}

fn monte_carlo(ctx: &Session, cap: u64, default_runs: usize) -> MonteCarlo {
    MonteCarlo::new(ctx.config.evaluation.n_runs.unwrap_or(default_runs), cap, ctx.seed)
}

fn arl(ctx: &Session) -> Result<()> {
    let c = &ctx.config;
    let reference = Arc::new(c.reference_set(&ctx.base, ctx.seed)?);
    let kernel = c.kernel(&reference)?;
    let null = c.null_model()?;
    let grid = c.evaluation.w_grid.clone().unwrap_or_else(|| vec![c.detector.w]);

    #[derive(Serialize)]
    struct Entry {
        w: usize,
        #[serde(flatten)]
        report: RunLengthReport,
    }
    let mut entries = Vec::new();
    let mut rows = Vec::new();
    for &w in &grid {
        let schedule = c.schedule(&ctx.base, &reference, kernel.as_ref(), w, ctx.seed)?;
        let alpha = schedule
            .alpha()
            .or(c.alpha())
            .context("arl needs a nominal alpha: set `alpha` on the threshold policy")?;
        let detector = c.detector(reference.clone(), kernel, w, schedule)?;
        let mc = monte_carlo(ctx, c.cap(Some(alpha))?, 250);
        let out = estimate_arl0(&detector, &null, alpha, c.evaluation.lambda, &mc)?;
        let runs_path = if c.evaluation.w_grid.is_some() {
            ctx.out.join(format!("arl_runs_w{w}.csv"))
        } else {
            ctx.out.join("arl_runs.csv")
        };
        let mut f = create(&runs_path)?;
        write_runs_csv(&mut f, &out.runs, Some(&ctx.provenance))?;
        f.flush()?;
        println!(
            "w={w}: mean T {:.1} (se {:.1}), slackness {:.2}, censored {}",
            out.report.mean_t, out.report.standard_error, out.report.slackness, out.report.censored_count
        );
        rows.push(SweepRow::from_report(reference.len(), w, &out.report));
        entries.push(Entry { w, report: out.report });
    }
    if c.evaluation.w_grid.is_some() {
        let mut f = create(&ctx.out.join("arl_sweep.csv"))?;
        write_sweep_csv(&mut f, &rows, Some(&ctx.provenance))?;
        f.flush()?;
    }

    #[derive(Serialize)]
    struct Body {
        reports: Vec<Entry>,
    }
    write_json(&ctx.out.join("arl_report.json"), ctx, Body { reports: entries })
}

fn delay(ctx: &Session) -> Result<()> {
    let c = &ctx.config;
    let model = c.model()?;
    ensure!(
        model.change_point().is_some(),
        "delay needs stream.post and stream.change_point; use `arl` for null streams"
    );
    let reference = Arc::new(c.reference_set(&ctx.base, ctx.seed)?);
    let kernel = c.kernel(&reference)?;
    let schedule = c.schedule(&ctx.base, &reference, kernel.as_ref(), c.detector.w, ctx.seed)?;
    let detector = c.detector(reference, kernel, c.detector.w, schedule)?;
    let cap = c.cap(detector.schedule().alpha().or(c.alpha()))?;
    let out = estimate_delay(&detector, &model, &monte_carlo(ctx, cap, 200))?;
    let mut f = create(&ctx.out.join("delay_runs.csv"))?;
    write_runs_csv(&mut f, &out.runs, Some(&ctx.provenance))?;
    f.flush()?;
    println!(
        "mean delay {}, false alarm fraction {:.3}, censored {}",
        out.report.mean_delay.map_or("n/a".into(), |d| format!("{d:.1}")),
        out.report.false_alarm_fraction,
        out.report.censored_count
    );

    #[derive(Serialize)]
    struct Body {
        report: DelayReport,
    }
    write_json(&ctx.out.join("delay_report.json"), ctx, Body { report: out.report })
}

/// Window sizes at `n = 3000` and reference sizes at `w = 300`.
const APPENDIX_W_GRID: [usize; 5] = [100, 200, 300, 400, 500];
const APPENDIX_N_GRID: [usize; 5] = [500, 1000, 3000, 10_000, 30_000];
const APPENDIX_ALPHA: f64 = 0.001;

fn reproduce_appendix(scale: f64, runs: usize, seed: u64, out: &Path) -> Result<()> {
    let alpha = APPENDIX_ALPHA * scale;
    ensure!(alpha > 0.0 && alpha < 1.0, "--scale {scale} gives alpha = {alpha}, outside (0, 1)");
    ensure!(runs > 0, "--runs must be positive");
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let cap = (1000.0 / alpha).ceil() as u64;

    #[derive(Serialize)]
    struct Sweep {
        alpha: f64,
        runs: usize,
        cap: u64,
        w_grid: [usize; 5],
        n_grid: [usize; 5],
        seed: u64,
    }
    let sweep = Sweep { alpha, runs, cap, w_grid: APPENDIX_W_GRID, n_grid: APPENDIX_N_GRID, seed };
    let provenance = Provenance { config_hash: canonical_hash(&sweep), seed };

    let point = |n: usize, w: usize| -> Result<SweepRow> {
        let mc = MonteCarlo::new(runs, cap, derive_seed(seed, w as u64, n as u64));
        let report = fixed_threshold_slackness::<f64>(n, w, alpha, &mc)?.report;
        println!(
            "n={n} w={w}: mean T {:.1} (se {:.1}), slackness {:.2}, censored {}",
            report.mean_t, report.standard_error, report.slackness, report.censored_count
        );
        Ok(SweepRow::from_report(n, w, &report))
    };
    let fig1a = APPENDIX_W_GRID.iter().map(|&w| point(3000, w)).collect::<Result<Vec<_>>>()?;
    let fig1b = APPENDIX_N_GRID.iter().map(|&n| point(n, 300)).collect::<Result<Vec<_>>>()?;
    for (name, rows) in [("fig1a.csv", &fig1a), ("fig1b.csv", &fig1b)] {
        let mut f = create(&out.join(name))?;
        write_sweep_csv(&mut f, rows, Some(&provenance))?;
        f.flush()?;
    }

    #[derive(Serialize)]
    struct Doc<'a> {
        provenance: &'a Provenance,
        sweep: &'a Sweep,
        fig1a: &'a [SweepRow],
        fig1b: &'a [SweepRow],
    }
    let mut text = serde_json::to_string_pretty(&Doc { provenance: &provenance, sweep: &sweep, fig1a: &fig1a, fig1b: &fig1b })?;
    text.push('\n');
    fs::write(out.join("appendix.json"), text)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Calibrate(common) => {
            let ctx = common.load()?;
            with_workers(common.workers, || calibrate(&ctx))
        }
        Command::Run { common, stream, trace } => {
            let ctx = common.load()?;
            with_workers(common.workers, || run_once(&ctx, stream.as_deref(), trace))
        }
        Command::Arl(common) => {
            let ctx = common.load()?;
            with_workers(common.workers, || arl(&ctx))
        }
        Command::Delay(common) => {
            let ctx = common.load()?;
            with_workers(common.workers, || delay(&ctx))
        }
        Command::ReproduceAppendix { scale, runs, seed, workers, out } => {
            with_workers(workers, || reproduce_appendix(scale, runs, seed, &out))
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
