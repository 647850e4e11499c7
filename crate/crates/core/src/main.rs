fn main() {
    std::process::exit(geomlab::cli::run_command(std::env::args_os()));
}
