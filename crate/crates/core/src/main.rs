fn main() {
    std::process::exit(lpvflow::cli::run_from(std::env::args_os()));
}
