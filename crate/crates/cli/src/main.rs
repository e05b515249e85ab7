use clap::Parser;
use ruelle_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(m) => {
            for f in &m.files {
                println!("{}  {}", f.sha256, f.name);
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
