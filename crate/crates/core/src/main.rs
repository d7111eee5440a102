fn main() {
    std::process::exit(cellfree_fl::cli::run_from_args(std::env::args_os()));
}
