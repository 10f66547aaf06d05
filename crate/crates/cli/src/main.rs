use clap::Parser;

fn main() {
    let cli = salmon_cli::Cli::parse();
    let mut stdout = std::io::stdout().lock();
    if let Err(e) = salmon_cli::run(cli, &mut stdout) {
        eprintln!("{}", salmon_cli::error_line(&e));
        std::process::exit(1);
    }
}
