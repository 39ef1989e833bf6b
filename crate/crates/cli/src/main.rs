use clap::Parser;

fn main() {
    std::process::exit(dwpap_cli::run(dwpap_cli::Cli::parse()));
}
