fn main() {
    std::process::exit(skewmem_cli::main_with_args(std::env::args_os()));
}
