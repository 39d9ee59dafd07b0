use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(rttqe::cli::main())
}
