fn main() {
    std::process::exit(kdarts::cli::run(std::env::args_os()));
}
