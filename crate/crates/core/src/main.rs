fn main() {
    std::process::exit(ttadapt::cli::main_with_args(std::env::args_os()));
}
