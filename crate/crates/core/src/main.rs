fn main() {
    std::process::exit(ballconf::cli::run(std::env::args_os()));
}
