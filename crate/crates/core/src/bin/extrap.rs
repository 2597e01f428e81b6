fn main() {
    std::process::exit(extrap_core::cli::main_with_args(std::env::args_os()));
}
