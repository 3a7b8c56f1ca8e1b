fn main() {
    std::process::exit(sparse_smooth::cli_io::run_cli(std::env::args_os()));
}
