fn main() {
    if let Err(e) = skewnet::cli::run() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
