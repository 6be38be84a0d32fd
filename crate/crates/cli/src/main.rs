use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RESIDUUM_LOG", "warn")).init();
    ExitCode::from(residuum_cli::run(std::env::args_os()))
}
