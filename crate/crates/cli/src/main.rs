use clap::Parser;

fn main() {
    std::process::exit(rangecap_cli::run(rangecap_cli::Cli::parse()));
}
