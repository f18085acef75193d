fn main() {
    std::process::exit(minsum::cli::run());
}
