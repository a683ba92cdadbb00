fn main() {
    std::process::exit(chaosmodel::cli::run(std::env::args_os()));
}
