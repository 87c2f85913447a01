fn main() {
    std::process::exit(splatkit::cli::run());
}
