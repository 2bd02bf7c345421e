fn main() {
    std::process::exit(xsamskit::cli::run(std::env::args_os()));
}
