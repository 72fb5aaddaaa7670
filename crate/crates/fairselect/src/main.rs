fn main() {
    std::process::exit(fairselect::cli::run(std::env::args().collect()));
}
