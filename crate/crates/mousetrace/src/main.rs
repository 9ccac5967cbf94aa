use clap::Parser;

fn main() {
    std::process::exit(mousetrace::cli::run(mousetrace::cli::Cli::parse()));
}
