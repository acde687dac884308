use clap::Parser;

fn main() {
    let cli = haaqi_cli::args::Cli::parse();
    std::process::exit(haaqi_cli::run(&cli).exit_code);
}
