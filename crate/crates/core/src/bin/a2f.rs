fn main() {
    std::process::exit(a2f_core::cli::run());
}
