fn main() {
    std::process::exit(gmmd::cli::run());
}
