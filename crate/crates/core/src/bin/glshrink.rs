fn main() {
    std::process::exit(glshrink::cli::main_with_args(std::env::args_os()));
}
