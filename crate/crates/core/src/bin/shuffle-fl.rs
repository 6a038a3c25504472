use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut stdout = std::io::stdout();
    ExitCode::from(shuffle_fl::cli::main(std::env::args_os(), &mut stdout))
}
