fn main() {
    std::process::exit(erp::cli::main_with_args(std::env::args_os()));
}
