fn main() {
    std::process::exit(lrpr::cli::run(std::env::args_os()));
}
