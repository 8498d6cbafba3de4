fn main() {
    std::process::exit(htgnn_cli::main_with_args(std::env::args_os()));
}
