fn main() {
    std::process::exit(annorater::cli::run_from(std::env::args_os()));
}
