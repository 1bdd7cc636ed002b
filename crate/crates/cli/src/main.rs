fn main() {
    std::process::exit(attribench_cli::run(std::env::args_os()));
}
