use std::process::ExitCode;

fn main() -> ExitCode {
    chroma::cli::main(std::env::args_os())
}
