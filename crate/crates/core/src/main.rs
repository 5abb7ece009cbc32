fn main() {
    std::process::exit(otclust::cli::run(std::env::args_os()));
}
