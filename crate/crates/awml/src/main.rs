use std::process::ExitCode;

fn main() -> ExitCode {
    awml::cli::main()
}
