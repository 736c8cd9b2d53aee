fn main() {
    std::process::exit(bidistill::cli::main_with_args(std::env::args_os()));
}
