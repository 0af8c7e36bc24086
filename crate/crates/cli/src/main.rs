use std::process::ExitCode;

use clap::Parser;
use epmpd_cli::args::{Cli, Command};
use epmpd_cli::commands::{bench_grid, cmd_bench, cmd_dedup, cmd_gen, cmd_verify, dedup_options, gen_options, verify_options};
use epmpd_cli::serve::{cmd_serve, serve_options};
use epmpd_cli::CliError;

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen(a) => cmd_gen(&gen_options(&a)?).map(drop),
        Command::Dedup(a) => cmd_dedup(&dedup_options(&a)?).map(drop),
        Command::Bench(a) => {
            let grid = bench_grid(&a)?;
            let rows = cmd_bench(&grid, a.csv.as_deref())?;
            eprintln!("{rows} rows");
            Ok(())
        }
        Command::Verify(a) => cmd_verify(&verify_options(&a)?).map(drop),
        Command::Serve(a) => {
            let report = cmd_serve(&serve_options(&a)?)?;
            eprintln!("{} {}", report.party, report.status);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("epmpd: {e}");
            e.exit()
        }
    }
}
