fn main() {
    std::process::exit(gbtopt::cli::run(std::env::args_os()));
}
