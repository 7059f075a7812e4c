use clap::Parser;

fn main() -> std::process::ExitCode {
    let cli = adversa_cli::args::Cli::parse();
    match adversa_cli::commands::run(cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}
