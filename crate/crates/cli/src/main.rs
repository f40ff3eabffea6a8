fn main() {
    std::process::exit(ftgp_cli::run_from(std::env::args_os()));
}
