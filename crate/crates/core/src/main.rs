use clap::Parser;

fn main() {
    let cli = badseq::cli::Cli::parse();
    std::process::exit(badseq::cli::main_with(cli));
}
