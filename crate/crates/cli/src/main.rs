fn main() {
    if let Err(e) = eprb_cli::run(std::env::args_os().collect()) {
        eprintln!("eprb: {e}");
        std::process::exit(e.exit_code());
    }
}
