fn main() {
    std::process::exit(sparsekit::harness::cli::run());
}
