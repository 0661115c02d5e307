fn main() {
    std::process::exit(semisv::cli::run(std::env::args_os()));
}
