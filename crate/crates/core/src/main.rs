fn main() {
    std::process::exit(vibrotactile::cli::run_cli(std::env::args_os()));
}
