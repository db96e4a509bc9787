use std::process::ExitCode;

use clap::Parser;
use figopt::{run, Cli, CliError};

fn init_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("FIGOPT_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("FIGOPT_THREADS must be a positive integer, got `{value}`")))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("FIGOPT_THREADS: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match init_threads().and_then(|()| run(cli)) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(CliError::Assertion(text)) => {
            print!("{text}");
            eprintln!("figopt: reproduction assertions failed");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("figopt: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
