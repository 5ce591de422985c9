fn main() {
    std::process::exit(nldiff_cli::main_with_args(std::env::args_os()));
}
