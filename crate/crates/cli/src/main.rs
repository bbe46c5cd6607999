fn main() {
    std::process::exit(ockelm_cli::main_with_args(std::env::args_os()));
}
