fn main() {
    std::process::exit(labelaug_cli::run_cli(std::env::args_os()));
}
