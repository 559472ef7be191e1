use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Deserialize;

use zrlab::experiments::{
    bg2_scan, ec_scan, measure_suite, oracle_suite, qtasep_coupling_test, qv_convergence_experiment,
    run_all, simulate_single, static_variance_test, CombinedReport, ConfigOverrides, ExperimentConfig, SuiteConfigs,
    SummaryReport, CONFIG_KEYS,
};
use zrlab::measure::{solve_fugacity, SiteMarginal};
use zrlab::Error;

#[derive(Parser, Debug)]
#[command(name = "zrlab", version, about = "Equilibrium fluctuations of totally asymmetric zero-range processes")]
#[command(after_help = after_help())]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML file with one section per subcommand
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory for report.json, CSV series and config-echo.txt
    #[arg(long, global = true, value_name = "DIR", default_value = "zrlab-out")]
    out: PathBuf,
    /// Base seed, overriding every section
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true, value_name = "INT")]
    workers: Option<usize>,
    /// Do not print the text report
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq)]
enum Command {
    /// Exact stationarity, integration-by-parts and generator identity suites
    Oracle,
    /// Fugacity solver and invariant marginal diagnostics
    Sample,
    /// One trajectory with every observable dumped as CSV series
    Simulate,
    /// Martingale and quadratic variation ensemble
    Qv,
    /// Second-order Boltzmann-Gibbs block-size scan
    Bg2,
    /// Energy-estimate scan over (eps, delta)
    Ec,
    /// Static variance of the initial field
    StaticVar,
    /// Coupled q-TASEP exclusion and zero-range run
    Qtasep,
    /// Every suite (the full acceptance run)
    All,
}

fn after_help() -> String {
    let mut s = String::from(
        "Config sections: [oracle] [sample] [simulate] [qv] [bg2] [ec] [static_var] [qtasep] [lemma].\n\
         Keys (any section):\n",
    );
    for (k, unit) in CONFIG_KEYS {
        let _ = writeln!(s, "  {k:<15} {unit}");
    }
    s.push_str("Exit status: 0 all gates pass, 1 a gate failed or a run error, 2 invalid arguments or config.");
    s
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    oracle: ConfigOverrides,
    #[serde(default)]
    sample: ConfigOverrides,
    #[serde(default)]
    simulate: ConfigOverrides,
    #[serde(default)]
    qv: ConfigOverrides,
    #[serde(default)]
    bg2: ConfigOverrides,
    #[serde(default)]
    ec: ConfigOverrides,
    #[serde(default)]
    static_var: ConfigOverrides,
    #[serde(default)]
    qtasep: ConfigOverrides,
    #[serde(default)]
    lemma: ConfigOverrides,
}

enum Failure {
    Config(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) | Error::InvalidArgument(_) | Error::EpsilonTooSmall { .. } => {
                Failure::Config(e.to_string())
            }
            other => Failure::Run(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(format!("io: {e}"))
    }
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile, Failure> {
    let Some(path) = path else { return Ok(ConfigFile::default()) };
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn suite_configs(file: &ConfigFile) -> SuiteConfigs {
    let d = SuiteConfigs::default();
    SuiteConfigs {
        oracle: file.oracle.apply(&d.oracle),
        measure: file.sample.apply(&d.measure),
        qtasep: file.qtasep.apply(&d.qtasep),
        static_var: file.static_var.apply(&d.static_var),
        qv: file.qv.apply(&d.qv),
        bg2: file.bg2.apply(&d.bg2),
        ec: file.ec.apply(&d.ec),
        lemma: file.lemma.apply(&d.lemma),
    }
}

/// Writes through a temporary file in the same directory and renames it.
fn write_atomic(dir: &Path, name: &str, contents: &str) -> std::io::Result<()> {
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, dir.join(name))
}

/// The effective configuration as a re-readable TOML file with unit comments.
fn config_echo(sections: &[(&str, &ExperimentConfig)], seed: Option<u64>, workers: Option<usize>) -> String {
    let mut out = String::from("# Effective configuration. Times are macroscopic; microscopic time is n^2 T.\n");
    let _ = writeln!(out, "# seed override: {seed:?}, workers: {workers:?}");
    for (name, cfg) in sections {
        let _ = writeln!(out, "\n[{name}]");
        let value = toml::Value::try_from(cfg).expect("config serializes");
        let table = value.as_table().expect("config is a table");
        for (key, unit) in CONFIG_KEYS {
            if let Some(v) = table.get(*key) {
                let _ = writeln!(out, "{key} = {v} # {unit}");
            }
        }
    }
    out
}

fn write_tables(dir: &Path, report: &SummaryReport) -> std::io::Result<()> {
    for (name, table) in &report.tables {
        write_atomic(dir, &format!("{}_{name}.csv", report.name), &table.to_csv())?;
    }
    Ok(())
}

/// Runs one suite; extra CSV series are pushed onto `series`.
fn run_single(
    command: Command,
    suites: &SuiteConfigs,
    simulate: &ExperimentConfig,
    w: Option<usize>,
    series: &mut Vec<(String, String)>,
) -> zrlab::Result<Vec<SummaryReport>> {
    Ok(match command {
        Command::Oracle => oracle_suite(&suites.oracle)?,
        Command::Sample => {
            let c = &suites.measure;
            let g = c.rate_function();
            let sm = SiteMarginal::new(solve_fugacity(c.rho, c.n, &g)?.phi, c.n, &g)?;
            series.push(("marginal.csv".to_string(), sm.to_csv()));
            vec![measure_suite(c)?]
        }
        Command::Simulate => {
            let (report, rec) = simulate_single(simulate)?;
            series.push(("series_field.csv".to_string(), rec.to_csv("field")?));
            for name in rec.integrals.keys() {
                series.push((format!("series_{name}.csv"), rec.to_csv(name)?));
            }
            vec![report]
        }
        Command::Qv => vec![qv_convergence_experiment(&suites.qv, w)?],
        Command::Bg2 => vec![bg2_scan(&suites.bg2, w)?],
        Command::Ec => vec![ec_scan(&suites.ec, w)?],
        Command::StaticVar => vec![static_variance_test(&suites.static_var, w)?],
        Command::Qtasep => vec![qtasep_coupling_test(&suites.qtasep)?],
        Command::All => run_all(suites, w)?.reports,
    })
}

fn run(cli: &Cli) -> Result<bool, Failure> {
    let file = load_config(cli.config.as_deref())?;
    let mut suites = suite_configs(&file);
    let mut simulate = file.simulate.apply(&ExperimentConfig::default());
    if let Some(seed) = cli.seed {
        suites = suites.with_seed(seed);
        simulate.seed = seed;
    }
    let w = cli.workers;
    if w == Some(0) {
        return Err(Failure::Config("--workers must be positive".into()));
    }
    let sections: Vec<(&str, &ExperimentConfig)> = match cli.command {
        Command::Oracle => vec![("oracle", &suites.oracle)],
        Command::Sample => vec![("sample", &suites.measure)],
        Command::Simulate => vec![("simulate", &simulate)],
        Command::Qv => vec![("qv", &suites.qv)],
        Command::Bg2 => vec![("bg2", &suites.bg2)],
        Command::Ec => vec![("ec", &suites.ec)],
        Command::StaticVar => vec![("static_var", &suites.static_var)],
        Command::Qtasep => vec![("qtasep", &suites.qtasep)],
        Command::All => vec![
            ("oracle", &suites.oracle),
            ("sample", &suites.measure),
            ("qtasep", &suites.qtasep),
            ("static_var", &suites.static_var),
            ("qv", &suites.qv),
            ("bg2", &suites.bg2),
            ("ec", &suites.ec),
            ("lemma", &suites.lemma),
        ],
    };
    let seed = sections[0].1.seed;
    let mut series = Vec::new();
    let combined = if cli.command == Command::All {
        run_all(&suites, w)?
    } else {
        let section = sections[0].0;
        let reports = run_single(cli.command, &suites, &simulate, w, &mut series).map_err(|e| match Failure::from(e) {
            Failure::Config(m) => Failure::Config(format!("[{section}] {m}")),
            run => run,
        })?;
        CombinedReport::new(seed, reports)
    };
    fs::create_dir_all(&cli.out)?;
    write_atomic(&cli.out, "report.json", &combined.to_json())?;
    write_atomic(&cli.out, "config-echo.txt", &config_echo(&sections, cli.seed, w))?;
    for r in &combined.reports {
        write_tables(&cli.out, r)?;
    }
    for (name, csv) in &series {
        write_atomic(&cli.out, name, csv)?;
    }
    if !cli.quiet {
        print!("{}", combined.to_text());
    }
    Ok(combined.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Config(msg)) => {
            eprintln!("zrlab: config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("zrlab: {msg}");
            ExitCode::from(1)
        }
    }
}
