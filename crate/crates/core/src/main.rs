fn main() {
    std::process::exit(tcsde::cli::run(std::env::args_os()));
}
