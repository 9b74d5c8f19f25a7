fn main() {
    std::process::exit(aeromu::cli::run(std::env::args_os()));
}
