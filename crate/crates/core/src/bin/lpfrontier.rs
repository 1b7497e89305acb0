fn main() {
    std::process::exit(lpfrontier::cli::main_with_args(std::env::args_os()));
}
