use std::process::ExitCode;

use rric_misspec::cli;

fn main() -> ExitCode {
    env_logger::init();
    let result = cli::parse_config(std::env::args_os().skip(1)).and_then(|cfg| cli::run(&cfg).map(|_| cfg));
    match result {
        Ok(cfg) => {
            log::info!("wrote results to {}", cfg.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", cli::error_record(&e));
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
