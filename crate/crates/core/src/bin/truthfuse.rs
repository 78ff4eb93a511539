fn main() {
    std::process::exit(truthfuse::cli::main_with_args(std::env::args_os()));
}
