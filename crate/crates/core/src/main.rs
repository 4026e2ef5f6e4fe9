fn main() {
    std::process::exit(groundtruth::cli::dispatch(std::env::args_os()));
}
