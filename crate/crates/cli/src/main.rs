use clap::Parser;

fn main() -> std::process::ExitCode {
    webrover::run(webrover::Cli::parse())
}
