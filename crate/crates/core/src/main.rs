fn main() {
    std::process::exit(terraseg::pipeline::cli::main_with_args(std::env::args_os()));
}
