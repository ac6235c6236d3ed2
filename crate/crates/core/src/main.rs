fn main() {
    std::process::exit(mitmono::cli_io::run_command(std::env::args_os()));
}
