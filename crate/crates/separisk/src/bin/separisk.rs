fn main() {
    std::process::exit(separisk::cli::main_with_args(std::env::args_os()));
}
