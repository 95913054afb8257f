fn main() {
    std::process::exit(norobi::cli::run(std::env::args_os()));
}
