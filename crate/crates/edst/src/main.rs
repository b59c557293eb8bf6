fn main() {
    std::process::exit(edst::cli::run(std::env::args_os()));
}
