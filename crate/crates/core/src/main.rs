fn main() {
    std::process::exit(oscnet::cli::run_from_args(std::env::args_os()));
}
