use clap::Parser;

fn main() {
    let cli = subexp::cli::Cli::parse();
    std::process::exit(subexp::cli::run(cli));
}
