fn main() {
    std::process::exit(wavesmooth::cli::run(std::env::args_os()));
}
