use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use wallclimb::check::check_trajectory;
use wallclimb::io::{
    emit_force_report, emit_trajectory, force_report_string, load_scenario, load_trajectory, save_scenario, summary,
    Units,
};
use wallclimb::pipeline::run_pipeline;
use wallclimb::scenario::{builtin, WallScenario, BUILTIN_NAMES};
use wallclimb::sweep::{feasibility_sweep, monotonicity_violations, parse_range, sweep_csv, sweep_map, SweepOptions};

/// Posture and contact-force planner for a hexapod climbing between two walls.
///
/// Scenarios are scenario files (TOML) or the built-in names steps,
/// obstacle and angled. Exit status is 0 only when every safety floor and
/// check passes, 1 when planning or checking fails, 2 on usage or I/O errors.
#[derive(Parser)]
#[command(name = "wallclimb", version)]
struct Cli {
    /// Reserved; the pipeline is deterministic. When given, `plan` runs
    /// twice and fails if the two trajectories differ.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan postures and forces, write the trajectory and force report, and
    /// re-check the result.
    Plan {
        scenario: String,
        /// Trajectory file [default: <name>.trajectory.json].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Force report CSV [default: <name>.forces.csv].
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Stop the posture search after this many seconds and use the best
        /// plan found.
        #[arg(long)]
        time_limit: Option<f64>,
    },
    /// Label a grid of wall angles and friction coefficients.
    Sweep {
        template: String,
        /// Wall angle range in degrees, start:end:count.
        #[arg(long, default_value = "0:40:9")]
        alpha: String,
        /// Friction range, start:end:count.
        #[arg(long, default_value = "0.2:1.4:13")]
        mu: String,
        /// Plan every round of the template, not a single one.
        #[arg(long)]
        full: bool,
        /// Write the labels as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Re-verify a trajectory with the independent checker.
    Check {
        trajectory: PathBuf,
        /// Scenario the trajectory was planned for [default: the built-in
        /// of the same name].
        #[arg(long)]
        scenario: Option<String>,
    },
    /// Summarize a trajectory and print or write its force report.
    Report {
        trajectory: PathBuf,
        #[arg(long)]
        scenario: Option<String>,
        /// Write the CSV here instead of standard output.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Write a built-in scenario as a scenario file.
    Export {
        name: String,
        #[arg(long, value_enum, default_value_t = UnitArg::M)]
        units: UnitArg,
        /// [default: <name>.toml]
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum UnitArg {
    M,
    Mm,
}

impl From<UnitArg> for Units {
    fn from(u: UnitArg) -> Self {
        match u {
            UnitArg::M => Units::Metres,
            UnitArg::Mm => Units::Millimetres,
        }
    }
}

fn resolve_scenario(arg: &str) -> Result<WallScenario> {
    let path = Path::new(arg);
    if path.exists() {
        return load_scenario(path).with_context(|| format!("loading scenario {arg}"));
    }
    builtin(arg).with_context(|| {
        format!(
            "{arg} is neither a scenario file nor a built-in scenario ({})",
            BUILTIN_NAMES.join(", ")
        )
    })
}

fn scenario_for(record_name: &str, arg: Option<&str>) -> Result<WallScenario> {
    resolve_scenario(arg.unwrap_or(record_name))
}

fn plan(
    scenario: &str,
    out: Option<PathBuf>,
    csv: Option<PathBuf>,
    time_limit: Option<f64>,
    seed: Option<u64>,
) -> Result<bool> {
    let mut s = resolve_scenario(scenario)?;
    if let Some(t) = time_limit {
        if !(t.is_finite() && t > 0.0) {
            bail!("time limit must be positive, got {t}");
        }
        s.planner.micp.time_limit = Some(Duration::from_secs_f64(t));
    }
    let t0 = Instant::now();
    let run = match run_pipeline(&s) {
        Ok(run) => run,
        Err(e) => {
            eprintln!("planning failed: {e}");
            return Ok(false);
        }
    };
    let t = run.timings;
    println!(
        "planned in {:.2?}: posture {:.2?}, weight calibration {:.2?}, {} force solves totalling {:.2?} (slowest {:.2?})",
        t0.elapsed(),
        t.posture,
        t.calibration,
        run.record.num_force_solves(),
        t.force_total,
        t.force_max
    );
    print!("{}", summary(&run.record));

    let out = out.unwrap_or_else(|| PathBuf::from(format!("{}.trajectory.json", s.name)));
    let csv = csv.unwrap_or_else(|| PathBuf::from(format!("{}.forces.csv", s.name)));
    emit_trajectory(&run.record, &out)?;
    emit_force_report(&run.record, &s.regions, &csv)?;
    println!("wrote {} and {}", out.display(), csv.display());

    let report = check_trajectory(&run.record, &s.robot, &s.regions);
    println!("{report}");
    let mut ok = report.passed();

    if let Some(seed) = seed {
        info!("seed {seed}: repeating the run to confirm determinism");
        let again = run_pipeline(&s).context("repeat run")?;
        let same = again.record.without_timings() == run.record.without_timings();
        println!("repeat run {}", if same { "identical" } else { "DIFFERS" });
        ok &= same;
    }
    Ok(ok)
}

fn sweep(template: &str, alpha: &str, mu: &str, full: bool, csv: Option<PathBuf>) -> Result<bool> {
    let s = resolve_scenario(template)?;
    let alphas: Vec<f64> = parse_range(alpha)
        .map_err(anyhow::Error::msg)
        .context("--alpha")?
        .into_iter()
        .map(f64::to_radians)
        .collect();
    let mus = parse_range(mu).map_err(anyhow::Error::msg).context("--mu")?;
    if mus.iter().any(|&m| m <= 0.0) {
        bail!("friction values must be positive");
    }
    let t0 = Instant::now();
    let cells = feasibility_sweep(&alphas, &mus, &s, SweepOptions { full });
    println!(
        "{} cells in {:.2?}; columns mu {} .. {}",
        cells.len(),
        t0.elapsed(),
        mus[0],
        mus[mus.len() - 1]
    );
    print!("{}", sweep_map(&cells, mus.len()));
    println!("# feasible  f force-fail  k kinematic-fail");
    if let Some(path) = csv {
        fs::write(&path, sweep_csv(&cells)).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    let sorted = mus.windows(2).all(|w| w[0] <= w[1]);
    let violations = if sorted {
        monotonicity_violations(&cells, mus.len())
    } else {
        Vec::new()
    };
    for (a, m) in &violations {
        println!(
            "not monotone in mu: alpha {:.2}° mu {}",
            alphas[*a].to_degrees(),
            mus[*m]
        );
    }
    Ok(violations.is_empty())
}

fn check(trajectory: &Path, scenario: Option<&str>) -> Result<bool> {
    let record = load_trajectory(trajectory)?;
    let s = scenario_for(&record.scenario, scenario)?;
    let report = check_trajectory(&record, &s.robot, &s.regions);
    println!("{report}");
    Ok(report.passed())
}

fn report(trajectory: &Path, scenario: Option<&str>, csv: Option<PathBuf>) -> Result<bool> {
    let record = load_trajectory(trajectory)?;
    let s = scenario_for(&record.scenario, scenario)?;
    match csv {
        Some(path) => {
            print!("{}", summary(&record));
            emit_force_report(&record, &s.regions, &path)?;
            println!("wrote {}", path.display());
        }
        None => {
            eprint!("{}", summary(&record));
            std::io::stdout().write_all(force_report_string(&record, &s.regions).as_bytes())?;
        }
    }
    let floors = record.plans().all(|p| p.safety.passes(record.s_mu_floor));
    Ok(floors)
}

fn export(name: &str, units: Units, out: Option<PathBuf>) -> Result<bool> {
    let s = builtin(name).with_context(|| format!("no built-in scenario {name} ({})", BUILTIN_NAMES.join(", ")))?;
    let out = out.unwrap_or_else(|| PathBuf::from(format!("{name}.toml")));
    save_scenario(&s, units, &out)?;
    println!("wrote {}", out.display());
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Plan {
            scenario,
            out,
            csv,
            time_limit,
        } => plan(&scenario, out, csv, time_limit, cli.seed),
        Command::Sweep {
            template,
            alpha,
            mu,
            full,
            csv,
        } => sweep(&template, &alpha, &mu, full, csv),
        Command::Check { trajectory, scenario } => check(&trajectory, scenario.as_deref()),
        Command::Report {
            trajectory,
            scenario,
            csv,
        } => report(&trajectory, scenario.as_deref(), csv),
        Command::Export { name, units, out } => export(&name, units.into(), out),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
