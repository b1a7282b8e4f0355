use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use coralsim::diagnostics::{verdict, CheckStatus, DiagnosticsRecord, Verdict, VerdictOptions};
use coralsim::io::config::load_config;
use coralsim::io::csv::{read_diagnostics_file, CsvSink};
use coralsim::io::manifest::{now_seconds, write_json_atomic, RunManifest};
use coralsim::io::snapshot::{read_snapshot, write_snapshot};
use coralsim::mms::{convergence_study, default_levels};
use coralsim::oracle::{homogeneous_solution, HomogeneousIC};
use coralsim::stepping::{run_from, DiagnosticsSink, SimState, StopReason};
use coralsim::Error;

const EXIT_FAIL: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "coralsim", version, about = "Chemotaxis-fluid simulator with built-in invariant checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation and check every tracked invariant.
    Run {
        config: PathBuf,
        /// Output directory for diagnostics.csv, verdict.json and manifest.json.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Write a binary snapshot every N steps (and at the end).
        #[arg(long)]
        snapshot_every: Option<u64>,
        /// Continue from a snapshot instead of the configured initial data.
        #[arg(long)]
        restart: Option<PathBuf>,
    },
    /// Check a diagnostics CSV offline.
    Verify {
        csv: PathBuf,
        /// Also assert the fluid energy inequality (Stokes runs).
        #[arg(long)]
        energy: bool,
        /// Also assert convergence to the homogeneous equilibrium.
        #[arg(long)]
        converged: bool,
    },
    /// Print the homogeneous solution (n, m, c) at time t.
    Oracle { n0: f64, m0: f64, c0: f64, t: f64 },
    /// Measure the spatial order of the diffusion and advection operators.
    MmsConvergence {
        /// Number of grid levels starting at 16 cells per axis.
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
}

struct RunSink {
    csv: CsvSink,
    snapshot_every: Option<u64>,
    out: PathBuf,
    records: Vec<DiagnosticsRecord>,
}

impl RunSink {
    fn snapshot_path(out: &Path, step: u64) -> PathBuf {
        out.join(format!("snapshot_{step:08}.bin"))
    }
}

impl DiagnosticsSink for RunSink {
    fn emit(&mut self, state: &SimState, record: &DiagnosticsRecord) -> coralsim::Result<()> {
        self.records.push(record.clone());
        self.csv.emit(state, record)
    }

    fn after_step(&mut self, state: &SimState) -> coralsim::Result<()> {
        match self.snapshot_every {
            Some(k) if k > 0 && state.step % k == 0 => write_snapshot(state, &Self::snapshot_path(&self.out, state.step)),
            _ => Ok(()),
        }
    }
}

fn print_verdict(v: &Verdict) {
    for c in &v.checks {
        let status = match c.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Skipped => "SKIP",
        };
        let first = c.first_failure.map(|t| format!(" first failure at t = {t:.6e}")).unwrap_or_default();
        let note = if c.note.is_empty() { String::new() } else { format!(" ({})", c.note) };
        println!("{status} {:<28} worst {:.3e} tol {:.1e}{first}{note}", c.name, c.worst, c.tolerance);
    }
    println!(
        "report: sup L = {:.6e}, tail growth = {:.3e}, nm tail share = {:.3e}",
        v.report.lp_sup, v.report.lp_tail_growth, v.report.nm_tail_share
    );
}

fn is_usage_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Config(_) | Error::InvalidParameter { .. } | Error::InvalidGrid(_) | Error::Snapshot(_) | Error::Io { .. }
    )
}

fn cmd_run(config: &Path, out: &Path, snapshot_every: Option<u64>, restart: Option<&Path>) -> Result<bool, Error> {
    let cfg = load_config(config)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let state = match restart {
        Some(p) => {
            let s = read_snapshot(p)?;
            if s.grid() != &cfg.grid {
                return Err(Error::Snapshot("snapshot grid does not match the configuration".into()));
            }
            s
        }
        None => SimState::initial(&cfg)?,
    };
    let csv_path = out.join("diagnostics.csv");
    let mut manifest = RunManifest::new(&cfg, &csv_path)?;
    let mut sink = RunSink {
        csv: CsvSink::create(&csv_path)?,
        snapshot_every,
        out: out.to_path_buf(),
        records: Vec::new(),
    };
    let result = run_from(state, &cfg, &mut sink);
    manifest.end_time = now_seconds();
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            manifest.error = Some(e.to_string());
            manifest.write_atomic(&out.join("manifest.json"))?;
            return Err(e);
        }
    };
    if snapshot_every.is_some() {
        write_snapshot(&outcome.state, &RunSink::snapshot_path(out, outcome.state.step))?;
    }
    manifest.steps = outcome.state.step;
    manifest.t_final = outcome.state.t;
    manifest.stop = Some(outcome.stop);
    let passed = if sink.records.len() >= 2 {
        let mut opts = VerdictOptions::for_config(&cfg);
        // a run that hit t_end before settling is not a convergence failure
        opts.converged &= outcome.stop == StopReason::Converged;
        let v = verdict(&sink.records, opts)?;
        let vpath = out.join("verdict.json");
        write_json_atomic(&v, &vpath)?;
        manifest.record_verdict(&v, &vpath);
        print_verdict(&v);
        v.passed()
    } else {
        println!("single record (t_end reached at start); nothing to verify");
        true
    };
    manifest.write_atomic(&out.join("manifest.json"))?;
    println!(
        "stopped ({:?}) at t = {:.6e} after {} steps; output in {}",
        outcome.stop,
        outcome.state.t,
        outcome.state.step,
        out.display()
    );
    Ok(passed)
}

fn cmd_verify(csv: &Path, opts: VerdictOptions) -> Result<bool, Error> {
    // an unreadable series is an input problem, not an invariant failure
    let series = read_diagnostics_file(csv).map_err(|e| match e {
        Error::Diagnostics(msg) => Error::Config(format!("{}: {msg}", csv.display())),
        other => other,
    })?;
    let v = verdict(&series, opts).map_err(|e| Error::Config(e.to_string()))?;
    print_verdict(&v);
    Ok(v.passed())
}

fn cmd_oracle(n0: f64, m0: f64, c0: f64, t: f64) -> Result<bool, Error> {
    let ic = HomogeneousIC::new(n0, m0, c0)?;
    let (n, m, c) = homogeneous_solution(&ic, t)?;
    println!("{n} {m} {c}");
    Ok(true)
}

fn cmd_mms(levels: usize) -> Result<bool, Error> {
    let r = convergence_study(&default_levels(levels))?;
    println!("cells  diffusion_error  advection_error");
    for i in 0..r.cells.len() {
        println!("{:5}  {:.6e}     {:.6e}", r.cells[i], r.diffusion_errors[i], r.advection_errors[i]);
    }
    let diff_ok = (1.7..=2.3).contains(&r.diffusion_order);
    let adv_ok = (0.8..=1.3).contains(&r.advection_order);
    println!("diffusion order {:.3} ({})", r.diffusion_order, if diff_ok { "PASS" } else { "FAIL" });
    println!("advection order {:.3} ({})", r.advection_order, if adv_ok { "PASS" } else { "FAIL" });
    Ok(diff_ok && adv_ok)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run {
            config,
            out,
            snapshot_every,
            restart,
        } => cmd_run(config, out, *snapshot_every, restart.as_deref()),
        Command::Verify { csv, energy, converged } => cmd_verify(
            csv,
            VerdictOptions {
                energy: *energy,
                converged: *converged,
            },
        ),
        Command::Oracle { n0, m0, c0, t } => cmd_oracle(*n0, *m0, *c0, *t),
        Command::MmsConvergence { levels } => cmd_mms(*levels),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAIL),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if is_usage_error(&e) { EXIT_USAGE } else { EXIT_FAIL })
        }
    }
}
