use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use onedelta::harness::check::Check;
use onedelta::harness::export::{replay, write_trace};
use onedelta::harness::report::{write_csv, CsvRow, RunReport};
use onedelta::harness::{run_batch, run_seed, Scenario};
use onedelta::sim::{DelayPolicy, Tick};

#[derive(Parser)]
#[command(name = "onedelta", version, about = "Simulate and check optimistic-latency BFT protocols")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunFlags {
    /// Seed of the first run.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of consecutive seeds.
    #[arg(long)]
    runs: Option<u64>,
    /// Simulated time limit in ticks.
    #[arg(long)]
    horizon: Option<Tick>,
    /// Directory for CSV summaries and trace files.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of a scenario and report latency.
    Run {
        file: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Run a scenario once per parameter value.
    Sweep {
        file: PathBuf,
        #[arg(long)]
        vary: Param,
        /// `start:end:step`, inclusive. Varying `delta` also moves a fixed
    /// message delay to the new value.
        #[arg(long)]
        range: String,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Evaluate named property checks on every seed.
    Check {
        file: PathBuf,
        /// Comma-separated check names.
        #[arg(long, value_delimiter = ',')]
        suite: Vec<String>,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Re-execute an exported trace and compare event logs.
    Replay { trace: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Param {
    Delta,
    #[value(name = "Delta")]
    BigDelta,
    N,
    Sigma,
    Alpha,
}

fn load(file: &Path, flags: &RunFlags) -> Result<Scenario> {
    let mut s = Scenario::load(file)?;
    if let Some(seed) = flags.seed {
        s.seed = seed;
    }
    if let Some(runs) = flags.runs {
        s.runs = runs;
    }
    if let Some(h) = flags.horizon {
        s.horizon = h;
    }
    if s.name.is_empty() {
        s.name = file.file_stem().map(|x| x.to_string_lossy().into_owned()).unwrap_or_default();
    }
    s.validate()?;
    Ok(s)
}

fn parse_checks(names: &[String], scenario: &Scenario) -> Result<Vec<Check>> {
    if names.is_empty() {
        return Ok(Check::safety_suite(scenario.protocol));
    }
    let mut out = Vec::new();
    for name in names {
        let check: Check = name.trim().parse().map_err(anyhow::Error::msg)?;
        if !check.applies_to(scenario.protocol) {
            bail!("check `{check}` does not apply to {}", scenario.protocol);
        }
        out.push(check);
    }
    Ok(out)
}

fn parse_range(text: &str) -> Result<Vec<u64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let nums: Vec<u64> = parts.iter().map(|p| p.trim().parse::<u64>()).collect::<Result<_, _>>().context("range bounds must be integers")?;
    let (start, end, step) = match nums.as_slice() {
        [a, b] => (*a, *b, 1),
        [a, b, s] => (*a, *b, *s),
        _ => bail!("range must be start:end or start:end:step"),
    };
    if step == 0 || start > end {
        bail!("range {text} is empty");
    }
    Ok((start..=end).step_by(step as usize).collect())
}

/// Runs all seeds, optionally exporting each trace. Reports are sorted by seed.
fn execute_all(scenario: &Scenario, checks: &[Check], out: Option<&Path>) -> Result<Vec<RunReport>> {
    let trace_dir = out.map(|d| d.join("traces"));
    if let Some(dir) = &trace_dir {
        fs::create_dir_all(dir)?;
    }
    let seeds: Vec<u64> = scenario.seeds().collect();
    let results = run_batch(&seeds, |seed| -> Result<RunReport> {
        let (trace, report) = run_seed(scenario, seed, checks)?;
        if let Some(dir) = &trace_dir {
            let path = dir.join(format!("{}-{seed}.ndjson", scenario.name));
            let mut w = BufWriter::new(File::create(&path)?);
            write_trace(&mut w, scenario, seed, &trace)?;
            w.flush()?;
        }
        Ok(report)
    });
    results.into_iter().map(|(_, r)| r).collect()
}

fn rows(scenario: &Scenario, reports: &[RunReport]) -> Vec<CsvRow> {
    reports
        .iter()
        .map(|r| {
            let spec_cfg = scenario.run_spec(r.seed).map(|s| s.cfg).unwrap_or_else(|_| scenario.sim.clone());
            CsvRow::new(&scenario.name, scenario.protocol, &spec_cfg, r)
        })
        .collect()
}

fn emit_csv(rows: &[CsvRow], out: Option<&Path>, name: &str) -> Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let path = dir.join(format!("{name}.csv"));
            write_csv(File::create(&path)?, rows)?;
            eprintln!("wrote {}", path.display());
        }
        None => write_csv(io::stdout().lock(), rows)?,
    }
    Ok(())
}

fn summarize(reports: &[RunReport]) -> usize {
    let failed: Vec<&RunReport> = reports.iter().filter(|r| !r.passed()).collect();
    for r in &failed {
        for v in &r.violations {
            eprintln!("seed {}: {}: {}", r.seed, v.check, v.message);
        }
    }
    if let Some(first) = failed.first() {
        eprintln!("first failing seed {} (replay with --seed {} --runs 1 --out <dir>)", first.seed, first.seed);
    }
    failed.len()
}

fn cmd_run(file: &Path, flags: &RunFlags) -> Result<bool> {
    let scenario = load(file, flags)?;
    let checks = parse_checks(&scenario.check.suites, &scenario)?;
    let reports = execute_all(&scenario, &checks, flags.out.as_deref())?;
    for r in &reports {
        let latency = r.latency.map_or("-".to_string(), |l| l.to_string());
        println!("seed {:>6}  latency {:>6}  violations {}", r.seed, latency, r.violations.len());
    }
    emit_csv(&rows(&scenario, &reports), flags.out.as_deref(), &scenario.name)?;
    Ok(summarize(&reports) == 0)
}

fn cmd_sweep(file: &Path, vary: Param, range: &str, flags: &RunFlags) -> Result<bool> {
    let base = load(file, flags)?;
    let checks = parse_checks(&base.check.suites, &base)?;
    let mut all_rows = Vec::new();
    let mut failures = 0;
    for value in parse_range(range)? {
        let mut s = base.clone();
        match vary {
            Param::Delta => s.sim.delta = value,
            Param::BigDelta => s.sim.big_delta = value,
            Param::Sigma => s.sim.sigma = value,
            Param::Alpha => s.params.alpha = value,
            Param::N => {
                s.sim.n = value as usize;
                s.sim.f = s.sim.f.min((value as usize).saturating_sub(1) / 2);
            }
        }
        if let DelayPolicy::Fixed(d) = s.sim.delay {
            let d = if matches!(vary, Param::Delta) { value } else { d.min(s.sim.delta) };
            s.sim.delay = DelayPolicy::Fixed(d);
        }
        s.validate().with_context(|| format!("parameter value {value}"))?;
        let reports = execute_all(&s, &checks, None)?;
        failures += summarize(&reports);
        all_rows.extend(rows(&s, &reports));
    }
    emit_csv(&all_rows, flags.out.as_deref(), &format!("{}-sweep", base.name))?;
    Ok(failures == 0)
}

fn cmd_check(file: &Path, suite: &[String], flags: &RunFlags) -> Result<bool> {
    let scenario = load(file, flags)?;
    let names = if suite.is_empty() { scenario.check.suites.clone() } else { suite.to_vec() };
    let checks = parse_checks(&names, &scenario)?;
    let reports = execute_all(&scenario, &checks, flags.out.as_deref())?;
    for r in &reports {
        println!("seed {:>6}  {}", r.seed, if r.passed() { "pass" } else { "FAIL" });
    }
    let failed = summarize(&reports);
    println!("{} of {} traces passed [{}]", reports.len() - failed, reports.len(), names.join(","));
    Ok(failed == 0)
}

fn cmd_replay(path: &Path) -> Result<bool> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    match replay(BufReader::new(file))? {
        None => {
            println!("identical");
            Ok(true)
        }
        Some(d) => {
            println!("diverged at event {}", d.index);
            println!("  recorded: {}", d.recorded.as_deref().unwrap_or("<end of trace>"));
            println!("  replayed: {}", d.replayed.as_deref().unwrap_or("<end of trace>"));
            Ok(false)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run { file, flags } => cmd_run(file, flags),
        Command::Sweep { file, vary, range, flags } => cmd_sweep(file, *vary, range, flags),
        Command::Check { file, suite, flags } => cmd_check(file, suite, flags),
        Command::Replay { trace } => cmd_replay(trace),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
