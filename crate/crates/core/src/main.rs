fn main() {
    std::process::exit(signbow::cli::run(std::env::args_os()));
}
