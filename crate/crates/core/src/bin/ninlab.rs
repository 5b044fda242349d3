fn main() {
    std::process::exit(ninlab::cli::run_command(std::env::args_os()));
}
