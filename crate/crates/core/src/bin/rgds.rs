fn main() {
    std::process::exit(rgds::cli::main_with_args(std::env::args_os()));
}
