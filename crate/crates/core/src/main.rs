fn main() {
    std::process::exit(expsig::cli::run_from_args(std::env::args_os()));
}
