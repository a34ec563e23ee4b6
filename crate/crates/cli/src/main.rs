use clap::Parser;

fn main() {
    let cli = attest_cli::Cli::parse();
    std::process::exit(attest_cli::run(&cli));
}
