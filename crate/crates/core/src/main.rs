fn main() {
    std::process::exit(mmea::cli::run(std::env::args_os()));
}
