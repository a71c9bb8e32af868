fn main() {
    std::process::exit(agreement::cli::run(std::env::args_os()));
}
