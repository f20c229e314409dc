fn main() {
    std::process::exit(hillspec::cli::run(std::env::args_os()));
}
