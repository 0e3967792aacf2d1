fn main() {
    std::process::exit(metafx_cli::cli_main(std::env::args_os()));
}
