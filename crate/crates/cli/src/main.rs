use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gk_blowup::scenario::{run_scenario, verify_only, RunConfig, RunError, RunReport, Verdict};

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "gk-blowup", version, about = "Certify the blown-up generalized Kähler deformation on grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for sampled point sets, overriding the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage and write report.json plus CSV tables.
    Run(Common),
    /// Run one stage: model, lift, deform, positivity or convergence.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        stage: String,
    },
    /// Print the default config as JSON.
    PrintConfigTemplate,
}

fn load(common: &Common) -> Result<RunConfig, String> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            RunConfig::from_json(&text).map_err(|e| format!("invalid config: {e}"))?
        }
        None => RunConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn summarize(report: &RunReport) {
    for st in &report.stages {
        let status = if st.pass { "PASS" } else { "FAIL" };
        println!("{:<12} {status}", st.stage.name());
        if let Some(e) = &st.error {
            println!("  error: {e}");
        }
        for c in st.checks.iter().chain(st.scans.iter().flat_map(|s| &s.summary.checks)) {
            if !c.pass {
                println!("  {} = {:e} ({:?} {:e})", c.name, c.value, c.relation, c.threshold);
            }
        }
    }
    match report.certified {
        Some([c, t]) => println!("certified c = {c}, t = {t}"),
        None if report.stages.iter().any(|s| s.search.is_some()) => println!("no (c, t) certified"),
        None => {}
    }
    println!("verdict: {}", if report.verdict == Verdict::Pass { "pass" } else { "fail" });
}

fn finish(result: Result<RunReport, RunError>) -> ExitCode {
    match result {
        Ok(report) => {
            summarize(&report);
            if report.verdict == Verdict::Pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAIL)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    let (common, stage) = match &cli.command {
        Command::PrintConfigTemplate => {
            println!("{}", RunConfig::template_json());
            return ExitCode::SUCCESS;
        }
        Command::Run(common) => (common, None),
        Command::Verify { common, stage } => (common, Some(stage.as_str())),
    };
    let cfg = match load(common) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    finish(match stage {
        None => run_scenario(&cfg),
        Some(stage) => verify_only(&cfg, stage),
    })
}
