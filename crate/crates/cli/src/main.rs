use std::process::ExitCode;

use clap::Parser;
use sgdrisk_cli::{extract_overrides, run, Cli};

fn main() -> ExitCode {
    let (args, overrides) = extract_overrides(std::env::args().collect());
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(jobs) = cli.command.common().jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("sgdrisk: cannot size worker pool: {e}");
        }
    }
    match run(&cli, &overrides) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("sgdrisk: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
