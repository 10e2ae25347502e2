mod commands;
mod config;
mod output;
mod selftest;

use std::process::ExitCode;

use config::CliError;

const USAGE: &str = "usage: fracsde <command> [key=value ...] [config=<file>]

commands:
  simulate        generate a dataset directory
  estimate-hurst  estimate the Hurst index of a dataset or CSV series
  train           fit drift and diffusion networks to a dataset
  evaluate        score a checkpoint on the test split
  sweep-width     validation loss against hidden width
  sweep-fitting   Hurst-fitting error against number of observations
  sweep-time      Euler error against time step
  selftest        run the built-in oracle checks";

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some((command, rest)) = args.split_first() else {
        eprintln!("{USAGE}");
        return ExitCode::from(2);
    };
    let result = match command.as_str() {
        "simulate" => commands::simulate(rest),
        "estimate-hurst" => commands::estimate_hurst_cmd(rest),
        "train" => commands::train(rest),
        "evaluate" => commands::evaluate(rest),
        "sweep-width" => commands::sweep_width(rest),
        "sweep-fitting" => commands::sweep_fitting(rest),
        "sweep-time" => commands::sweep_time(rest),
        "selftest" => selftest::run(rest),
        "help" | "--help" | "-h" => {
            println!("{USAGE}");
            Ok(())
        }
        other => Err(CliError::Config(format!("unknown command `{other}`\n{USAGE}"))),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            match e {
                CliError::Config(_) => ExitCode::from(2),
                CliError::Runtime(_) => ExitCode::from(1),
            }
        }
    }
}
