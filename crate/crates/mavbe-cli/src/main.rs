fn main() {
    std::process::exit(mavbe_cli::cli_dispatch(std::env::args_os()));
}
