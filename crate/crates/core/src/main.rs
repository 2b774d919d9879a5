fn main() {
    std::process::exit(risley::cli::main_with_args(std::env::args_os()));
}
