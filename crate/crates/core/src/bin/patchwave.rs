//! Command-line entry point.

fn main() {
    std::process::exit(patchwave::cli_runner::main_with_args(std::env::args_os()));
}
