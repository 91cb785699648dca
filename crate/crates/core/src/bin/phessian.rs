fn main() {
    std::process::exit(phessian::cli::run(std::env::args_os()));
}
