fn main() {
    std::process::exit(cosmix::cli::run_from_args(std::env::args_os()));
}
