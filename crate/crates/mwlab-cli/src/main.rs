use clap::Parser;

fn main() {
    std::process::exit(mwlab_cli::main_with(mwlab_cli::Cli::parse()));
}
