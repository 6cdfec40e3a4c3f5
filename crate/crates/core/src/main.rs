fn main() {
    std::process::exit(ghl::cli::run(std::env::args_os()));
}
