use clap::Parser;

fn main() {
    let cli = resilsim::cli::Cli::parse();
    std::process::exit(resilsim::cli::run(cli));
}
