use std::process::ExitCode;

fn main() -> ExitCode {
    graphloom::cli::main()
}
