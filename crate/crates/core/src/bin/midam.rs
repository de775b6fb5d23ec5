fn main() {
    std::process::exit(midam::cli::parse_and_dispatch(std::env::args().skip(1)));
}
