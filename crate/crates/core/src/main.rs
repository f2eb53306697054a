fn main() {
    std::process::exit(evoconv::cli::run(std::env::args_os()));
}
