fn main() {
    std::process::exit(cipherlm::cli::main_with_args(std::env::args_os()));
}
