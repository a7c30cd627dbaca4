use clap::Parser;
use stepadapt::cli::{execute, exit_code_for, Cli};

fn main() {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(out) => {
            print!("{}", out.stdout);
            if !out.stdout.ends_with('\n') {
                println!();
            }
            std::process::exit(out.code);
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(exit_code_for(&e));
        }
    }
}
