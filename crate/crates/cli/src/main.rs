use clap::Parser;

fn main() {
    let cli = beaconloc_cli::Cli::parse();
    if let Err(e) = beaconloc_cli::run(cli) {
        eprintln!("beaconloc: {e}");
        std::process::exit(e.exit_code());
    }
}
