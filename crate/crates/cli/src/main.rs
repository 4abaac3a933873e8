//! `stabilab` command-line front end.
//!
//! Exit status: 0 when every enabled check passed, 1 when a check failed,
//! 2 for configuration, usage or I/O errors.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use stabilab::engine::run;
use stabilab::experiments::{
    run_full_verification, run_sweep, with_jobs, write_sweep_csv, ExperimentConfig, SweepConfig,
};
use stabilab::problems::sample_dataset;
use stabilab::schedule::realize;
use stabilab::seeds::{derive_seed, Axis};
use stabilab::Error;

#[derive(Parser, Debug)]
#[command(name = "stabilab", version, about = "Stability and generalization experiments for minibatch gradient methods")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every enabled check of an experiment config.
    Verify(Common),
    /// Evaluate a parameter grid and emit long-format CSV.
    Sweep(Common),
    /// Write realized schedules, datasets or trajectories as CSV.
    Dump {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = DumpWhat::Schedule)]
        what: DumpWhat,
        /// Trial whose seed substreams are used.
        #[arg(long, default_value_t = 0)]
        trial: u64,
        /// Index of the schedule entry in the config.
        #[arg(long, default_value_t = 0)]
        schedule: usize,
    },
}

/// The run manifest shared by all subcommands.
#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long, env = "STABILAB_SEED")]
    seed: Option<u64>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, env = "STABILAB_JOBS")]
    jobs: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Both)]
    format: Format,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Both,
}

impl Format {
    fn json(self) -> bool {
        self != Format::Csv
    }

    fn csv(self) -> bool {
        self != Format::Json
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum DumpWhat {
    Schedule,
    Dataset,
    Trajectory,
}

enum Failure {
    Checks,
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Verify(c) => pooled(c, || cmd_verify(c)),
        Command::Sweep(c) => pooled(c, || cmd_sweep(c)),
        Command::Dump {
            common,
            what,
            trial,
            schedule,
        } => pooled(common, || cmd_dump(common, *what, *trial, *schedule)),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn pooled(common: &Common, f: impl FnOnce() -> Result<(), Failure> + Send) -> Result<(), Failure> {
    let jobs = match common.jobs {
        Some(0) => return Err(Failure::Usage("--jobs must be at least 1".into())),
        Some(j) => j,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    with_jobs(jobs, f)?
}

fn read_config(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Failure::Usage(format!("config not found: {}", path.display())),
        _ => Failure::Usage(format!("cannot read config {}: {e}", path.display())),
    })
}

fn load_experiment(common: &Common) -> Result<ExperimentConfig, Failure> {
    let text = read_config(&common.config)?;
    let mut cfg: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| Failure::Usage(format!("{}: {e}", common.config.display())))?;
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn prepare_out(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .map_err(|e| Failure::Usage(format!("output directory {} is not writable: {e}", dir.display())))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: serde::Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    fs::write(dir.join(name), text)?;
    Ok(())
}

fn cmd_verify(common: &Common) -> Result<(), Failure> {
    let cfg = load_experiment(common)?;
    prepare_out(&common.out)?;
    let report = run_full_verification(&cfg)?;
    if common.format.json() {
        write_json(&common.out, "report.json", &report)?;
    }
    if common.format.csv() {
        report.write_summary_csv(create(&common.out, "summary.csv")?)?;
    }
    print!("{report}");
    eprintln!("wall time: {:.3}s", report.metadata.wall_time.as_secs_f64());
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn cmd_sweep(common: &Common) -> Result<(), Failure> {
    let text = read_config(&common.config)?;
    let mut sweep: SweepConfig = serde_json::from_str(&text)
        .map_err(|e| Failure::Usage(format!("{}: {e}", common.config.display())))?;
    if let Some(seed) = common.seed {
        sweep.base.master_seed = seed;
    }
    sweep.cells()?;
    prepare_out(&common.out)?;
    let rows = run_sweep(&sweep)?;
    if common.format.json() {
        write_json(&common.out, "sweep.json", &rows)?;
    }
    if common.format.csv() {
        write_sweep_csv(&rows, create(&common.out, "sweep.csv")?)?;
    }
    let failed = rows.iter().filter(|r| r.verdict == "fail").count();
    let refused = rows.iter().filter(|r| r.verdict == "refused").count();
    println!("{}: {} rows, {failed} failed, {refused} refused", sweep.base.name, rows.len());
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn cmd_dump(common: &Common, what: DumpWhat, trial: u64, schedule: usize) -> Result<(), Failure> {
    let cfg = load_experiment(common)?;
    let entry = cfg.schedules.get(schedule).ok_or_else(|| {
        Failure::Usage(format!(
            "--schedule {schedule}: config declares {} schedules",
            cfg.schedules.len()
        ))
    })?;
    prepare_out(&common.out)?;
    let instance = cfg.instance.build()?;
    let data = sample_dataset(&instance, cfg.n, derive_seed(cfg.master_seed, trial, Axis::Data))?;
    let sched = realize(&entry.spec_for_trial(cfg.n, cfg.horizon, cfg.master_seed, trial))?;
    match what {
        DumpWhat::Schedule => sched.write_csv(create(&common.out, "schedule.csv")?)?,
        DumpWhat::Dataset => data.write_csv(create(&common.out, "dataset.csv")?)?,
        DumpWhat::Trajectory => {
            let plan = cfg.step_plan.resolve(&instance, cfg.horizon, cfg.n)?;
            let traj = run(&instance, &data, &sched, &plan, instance.w1())?;
            traj.write_csv(create(&common.out, "trajectory.csv")?)?;
        }
    }
    Ok(())
}
