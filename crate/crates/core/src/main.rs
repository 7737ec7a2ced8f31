fn main() {
    std::process::exit(dtot::cli::main_with_args(std::env::args_os()));
}
