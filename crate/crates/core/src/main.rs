fn main() {
    std::process::exit(pqs::cli::run(std::env::args_os()));
}
