//! `moldloop`: run scenarios and inspect their reports.
//!
//! Exit codes: 0 success, 2 config error, 3 runtime error, 4 a scenario
//! check failed in `--self-test` mode.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use moldloop::runtime::{
    load_config_with_seed, run_scenario, spot_check, RunReport, ScenarioConfig, ScenarioKind, ScenarioResults,
};
use moldloop::Error;

#[derive(Parser)]
#[command(name = "moldloop", version, about = "Cycle-to-cycle injection molding quality control scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Print nothing on success.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (TOML). Without it, defaults are used and --seed is required.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Root seed; overrides the config file.
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory; overrides the config file.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Exit with code 4 when any scenario check fails.
    #[arg(long)]
    self_test: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Plackett-Burman screening with Fisher tests.
    Screen(RunArgs),
    /// Train the forward (or, with --inverse, the inverse) quality model.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Train the quality → parameters model.
        #[arg(long)]
        inverse: bool,
    },
    /// Topology search and recurrent profile model.
    Tune(RunArgs),
    /// Closed-loop inverse-model control.
    Loop(RunArgs),
    /// Profile regulation against a disturbance.
    Regulate(RunArgs),
    /// Classifier versus SPC chart on the hidden-defect stream.
    SpcCompare(RunArgs),
    /// Summarize a finished run and recompute its values from the artifacts.
    Report {
        /// Run directory containing report.json.
        #[arg(long)]
        out: PathBuf,
        /// Exit with code 4 when a check or a recomputation fails.
        #[arg(long)]
        self_test: bool,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
    Threshold,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::MissingSeed => Failure::Config(e.to_string()),
            other => Failure::Runtime(error_chain(&other)),
        }
    }
}

fn error_chain(e: &dyn std::error::Error) -> String {
    let mut s = e.to_string();
    let mut src = e.source();
    while let Some(inner) = src {
        let msg = inner.to_string();
        if !s.contains(&msg) {
            s.push_str(": ");
            s.push_str(&msg);
        }
        src = inner.source();
    }
    s
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Threshold) => {
            if !cli.quiet {
                eprintln!("self-test: one or more checks failed");
            }
            ExitCode::from(4)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    let (run, allowed, default) = match &cli.command {
        Command::Screen(r) => (r, &[ScenarioKind::Screen][..], ScenarioKind::Screen),
        Command::Train { run, inverse } => (
            run,
            &[ScenarioKind::TrainForward, ScenarioKind::TrainInverse][..],
            if *inverse {
                ScenarioKind::TrainInverse
            } else {
                ScenarioKind::TrainForward
            },
        ),
        Command::Tune(r) => (r, &[ScenarioKind::TuneTopology][..], ScenarioKind::TuneTopology),
        Command::Loop(r) => (r, &[ScenarioKind::ClosedLoop][..], ScenarioKind::ClosedLoop),
        Command::Regulate(r) => (r, &[ScenarioKind::Regulate][..], ScenarioKind::Regulate),
        Command::SpcCompare(r) => (r, &[ScenarioKind::SpcCompare][..], ScenarioKind::SpcCompare),
        Command::Report { out, self_test } => return report(out, *self_test, cli.quiet),
    };
    let mut config = match &run.config {
        Some(path) => load_config_with_seed(path, run.seed)?,
        None => ScenarioConfig::new(default, run.seed.ok_or(Error::MissingSeed)?),
    };
    if !allowed.contains(&config.kind) {
        return Err(Failure::Config(format!(
            "config kind `{}` does not match this subcommand (expected {})",
            config.kind,
            allowed.iter().map(|k| k.name()).collect::<Vec<_>>().join(" or ")
        )));
    }
    if let Some(out) = &run.out {
        config.out_dir = out.clone();
    }
    let report = run_scenario(&config)?;
    if !cli.quiet {
        print_report(&report);
    }
    if run.self_test && !report.all_checks_pass() {
        return Err(Failure::Threshold);
    }
    Ok(())
}

fn report(dir: &Path, self_test: bool, quiet: bool) -> Result<(), Failure> {
    let r = RunReport::read(dir)
        .map_err(|e| Failure::Runtime(format!("cannot read report in {}: {}", dir.display(), error_chain(&e))))?;
    let spots = spot_check(&r, dir)?;
    if !quiet {
        print_report(&r);
        println!("recomputed from artifacts:");
        for s in &spots {
            println!(
                "  {:<4} {} = {} (artifact {}: {})",
                if s.passed { "ok" } else { "FAIL" },
                s.value,
                s.reported,
                s.artifact,
                s.recomputed
            );
        }
    }
    if self_test && (!r.all_checks_pass() || spots.iter().any(|s| !s.passed)) {
        return Err(Failure::Threshold);
    }
    Ok(())
}

fn print_report(r: &RunReport) {
    println!("scenario {} (seed {}) -> {}", r.config.kind, r.config.seed, r.out_dir.display());
    match &r.results {
        ScenarioResults::Screen { response, significant, .. } => {
            println!("  response {}: significant factors {:?}", response.name(), significant);
        }
        ScenarioResults::TrainForward { model } | ScenarioResults::TrainInverse { model } => {
            println!("  {} on {} cycles", model.topology, model.n_cycles);
            for (o, c) in model.outputs.iter().zip(&model.held_out_correlation) {
                println!("  held-out correlation {o}: {c:.4}");
            }
        }
        ScenarioResults::TuneTopology { search, profile } => {
            println!(
                "  search: selected {} hidden, {} after pruning ({})",
                search.selected_hidden, search.final_hidden, search.topology
            );
            println!(
                "  profile model: {} points per profile, held-out NRMSE {:.4}",
                profile.points_per_profile, profile.nrmse
            );
        }
        ScenarioResults::ClosedLoop {
            oracle,
            rms_trajectory,
            iterations_to_threshold,
            warnings,
            ..
        } => {
            println!("  oracle best RMS {:.4}", oracle.best_rms);
            let t: Vec<String> = rms_trajectory.iter().map(|r| format!("{r:.4}")).collect();
            println!("  RMS trajectory [{}]", t.join(", "));
            match iterations_to_threshold {
                Some(i) => println!("  threshold met after {i} adjustment(s)"),
                None => println!("  threshold not met"),
            }
            for w in warnings {
                println!("  warning: {w}");
            }
        }
        ScenarioResults::Regulate {
            regulator,
            open_loop_deviation,
            regulated_deviation,
            rejection_ratio,
            ..
        } => {
            println!(
                "  {regulator} regulator: open loop {:+.3} %, regulated {:+.3} %, rejection {:.1}x",
                100.0 * open_loop_deviation,
                100.0 * regulated_deviation,
                rejection_ratio
            );
        }
        ScenarioResults::SpcCompare {
            comparison,
            matched_fp_ratio,
        } => {
            println!(
                "  {} cycles, {} non-conforming",
                comparison.n_cycles, comparison.n_nonconforming
            );
            for m in [&comparison.nn_matched, &comparison.spc_matched].into_iter().flatten() {
                println!(
                    "  {} at threshold {:.4}: detection {:.3}, false positives {:.4}",
                    m.method,
                    m.threshold,
                    m.detection_rate.unwrap_or(f64::NAN),
                    m.false_positive_rate.unwrap_or(f64::NAN)
                );
            }
            if let Some(r) = matched_fp_ratio {
                println!("  false-positive ratio NN/SPC {r:.3}");
            }
        }
    }
    for c in &r.checks {
        println!(
            "  check {:<32} {:>12.6} {} {:<10} {}",
            c.name,
            c.value,
            serde_op(c.op),
            c.threshold,
            if c.passed { "pass" } else { "FAIL" }
        );
    }
    println!("  total {:.2} s", r.timing.total_s);
}

fn serde_op(op: moldloop::runtime::CheckOp) -> &'static str {
    use moldloop::runtime::CheckOp::*;
    match op {
        Lt => "<",
        Le => "<=",
        Ge => ">=",
        Eq => "==",
    }
}
