fn main() {
    std::process::exit(entropylab::cli::run(std::env::args_os()));
}
