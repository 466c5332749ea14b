fn main() {
    std::process::exit(causalrep::cli::run(std::env::args().skip(1)));
}
