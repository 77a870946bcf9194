use clap::Parser;

fn main() {
    let cli = rvr_cli::Cli::parse();
    if let Err(err) = rvr_cli::run(cli) {
        eprintln!("error: {err}");
        std::process::exit(rvr_cli::exit_code(&err));
    }
}
