fn main() {
    std::process::exit(bidscape::cli::run(std::env::args_os()));
}
