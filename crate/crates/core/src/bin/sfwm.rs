fn main() {
    std::process::exit(sfwm::cli::run(std::env::args_os()));
}
