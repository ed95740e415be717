//! `msgfem`: run an MS-GFEM experiment from a `key = value` config file.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use msgfem_core::experiment::{is_config_error, run};
use msgfem_core::RunConfig;

const CHECK_FAILURE: u8 = 1;
const CONFIG_ERROR: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "msgfem", version, about = "MS-GFEM for weighted interior-penalty DG on the unit square")]
struct Args {
    /// Config file of `key = value` lines; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run only the property suite.
    #[arg(long)]
    checks_only: bool,
    /// Seed, overriding `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for per-subdomain work.
    #[arg(long)]
    threads: Option<usize>,
}

fn load(args: &Args) -> Result<RunConfig, String> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            RunConfig::parse(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        config = config.with_seed(seed);
    }
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    Ok(config)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let config = match load(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(CONFIG_ERROR);
        }
    };
    if let Some(k) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("config error: --threads {k}: {e}");
            return ExitCode::from(CONFIG_ERROR);
        }
    }
    match run(&config, args.checks_only) {
        Ok(outcome) => {
            print!("{}", outcome.report);
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            if outcome.success {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(CHECK_FAILURE)
            }
        }
        Err(e) if is_config_error(&e) => {
            eprintln!("config error: {e}");
            ExitCode::from(CONFIG_ERROR)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(CHECK_FAILURE)
        }
    }
}
