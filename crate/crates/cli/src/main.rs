use std::path::{Path, PathBuf};
use std::process::ExitCode;

use abphase::scenario::{load_scenario, run_scenario, run_sweep, RunOptions, ScenarioConfig};
use abphase::UnitSystem;
use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

mod report;

const DEFAULT_FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/fixtures");

#[derive(Parser)]
#[command(name = "abphase", version, about = "Aharonov-Bohm phases by several independent methods")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand)]
enum Command {
    /// Run every method listed in a scenario.
    Run { file: String },
    /// Run a scenario once per value of its sweep parameter.
    Sweep { file: String },
    /// Load and check a scenario without running it.
    Validate { file: String },
    /// List the scenarios in the fixture directory.
    ListFixtures,
}

#[derive(Args)]
struct Opts {
    /// Also write results as CSV.
    #[arg(long, global = true, value_name = "PATH")]
    csv: Option<PathBuf>,
    /// Convert the scenario to this unit system before running.
    #[arg(long, global = true, value_enum)]
    units: Option<Units>,
    /// Override the scenario's relative tolerance.
    #[arg(long, global = true, value_name = "X")]
    rel_tol: Option<f64>,
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Report the self-interaction term and field-line statistics.
    #[arg(long, global = true)]
    diagnostics: bool,
    /// Directory searched for scenarios given by name.
    #[arg(long, global = true, env = "ABPHASE_FIXTURES", default_value = DEFAULT_FIXTURES, hide_default_value = true)]
    fixtures: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Units {
    Si,
    Natural,
}

impl From<Units> for UnitSystem {
    fn from(u: Units) -> Self {
        match u {
            Units::Si => UnitSystem::Si,
            Units::Natural => UnitSystem::Natural,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// A path to an existing file, or a fixture name with or without `.toml`.
fn resolve(file: &str, fixtures: &Path) -> anyhow::Result<PathBuf> {
    let direct = PathBuf::from(file);
    if direct.is_file() {
        return Ok(direct);
    }
    for name in [file.to_string(), format!("{file}.toml")] {
        let p = fixtures.join(name);
        if p.is_file() {
            return Ok(p);
        }
    }
    bail!("no scenario file '{file}' (also looked in {})", fixtures.display())
}

fn load(file: &str, opts: &Opts) -> anyhow::Result<ScenarioConfig> {
    let path = resolve(file, &opts.fixtures)?;
    load_scenario(&path).with_context(|| format!("loading {}", path.display()))
}

fn fixture_names(dir: &Path) -> anyhow::Result<Vec<(String, ScenarioConfig)>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let cfg = load_scenario(&p).with_context(|| format!("loading {}", p.display()))?;
            let stem = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            Ok((stem, cfg))
        })
        .collect()
}

fn execute(cli: &Cli) -> anyhow::Result<bool> {
    let opts = &cli.opts;
    if let Some(n) = opts.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
        log::info!("using {n} threads");
    }
    let run_opts = RunOptions { rel_tol: opts.rel_tol, units: opts.units.map(Into::into), diagnostics: opts.diagnostics };
    match &cli.command {
        Command::Validate { file } => {
            let cfg = load(file, opts)?;
            println!("{}: ok ({:?}, {} methods)", cfg.name, cfg.kind, cfg.methods.len());
            Ok(true)
        }
        Command::ListFixtures => {
            for (stem, cfg) in fixture_names(&opts.fixtures)? {
                println!("{stem:<32} {}", cfg.description.as_deref().unwrap_or(""));
            }
            Ok(true)
        }
        Command::Run { file } => {
            let cfg = load(file, opts)?;
            let r = run_scenario(&cfg, &run_opts)?;
            print!("{}", report::table(&r));
            if let Some(path) = &opts.csv {
                report::write_csv(path, std::slice::from_ref(&(cfg.name.clone(), &r)), &[])?;
            }
            Ok(r.all_converged())
        }
        Command::Sweep { file } => {
            let cfg = load(file, opts)?;
            if cfg.sweep.is_none() {
                bail!("{} has no [sweep] section", cfg.name);
            }
            let s = run_sweep(&cfg, &run_opts)?;
            print!("{}", report::sweep_table(&s));
            if let Some(path) = &opts.csv {
                let rows: Vec<_> = s
                    .rows
                    .iter()
                    .filter_map(|row| row.report.as_ref().map(|r| (format!("{}[{}={}]", s.scenario, s.parameter, row.value), r)))
                    .collect();
                report::write_csv(path, &rows, &s.convergence)?;
            }
            let ok = s.rows.iter().all(|r| r.report.as_ref().is_some_and(|r| r.all_converged()));
            Ok(ok)
        }
    }
}
