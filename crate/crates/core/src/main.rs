fn main() {
    std::process::exit(joyce::cli_io::cli::run_cli(std::env::args_os()));
}
