use clap::Parser;

fn main() {
    let cli = parplan_cli::Cli::parse();
    parplan_cli::init_logging(cli.verbose());
    match parplan_cli::run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(e.exit_code());
        }
    }
}
