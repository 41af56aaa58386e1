use clap::Parser;

fn main() {
    let cli = elastic_pwm_cli::Cli::parse();
    match elastic_pwm_cli::run(&cli) {
        Ok(out) => println!("{}", out.out_dir.display()),
        Err(e) => {
            eprintln!("{}", e.record());
            std::process::exit(e.class.exit_code());
        }
    }
}
