fn main() {
    std::process::exit(honvis::cli::run(std::env::args_os()));
}
