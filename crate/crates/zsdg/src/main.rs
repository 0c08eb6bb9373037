fn main() {
    std::process::exit(zsdg::cli::run());
}
