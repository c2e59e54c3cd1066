fn main() {
    std::process::exit(gvm::cli::run())
}
