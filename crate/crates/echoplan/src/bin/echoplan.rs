fn main() {
    std::process::exit(echoplan::cli::run(std::env::args_os()));
}
