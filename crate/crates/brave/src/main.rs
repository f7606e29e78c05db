use clap::Parser;

fn main() {
    let cli = brave::cli::Cli::parse();
    if let Err(e) = brave::cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
