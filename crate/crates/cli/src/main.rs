fn main() {
    std::process::exit(balance_lab_cli::run(std::env::args_os()));
}
