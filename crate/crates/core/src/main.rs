fn main() {
    std::process::exit(tabbench::cli::main_with_args(std::env::args_os()));
}
