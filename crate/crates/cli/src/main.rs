fn main() {
    std::process::exit(efficiency_cli::run(std::env::args_os().collect()));
}
