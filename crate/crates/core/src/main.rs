fn main() {
    std::process::exit(qhstress::cli::main_with_args(std::env::args_os()));
}
