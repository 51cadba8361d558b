fn main() {
    std::process::exit(burstsim::cli::dispatch(std::env::args_os()));
}
