fn main() {
    std::process::exit(georeg_cli::main_with_args(std::env::args_os()));
}
