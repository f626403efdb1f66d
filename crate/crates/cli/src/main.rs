use std::process::ExitCode;

fn main() -> ExitCode {
    if let Err(e) = pgjsb_cli::init_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(pgjsb_cli::EXIT_INPUT);
    }
    ExitCode::from(pgjsb_cli::run(std::env::args_os()))
}
