fn main() {
    std::process::exit(vsink_core::cli::main_with_args(std::env::args_os()));
}
