fn main() {
    std::process::exit(rdpg_isomap::cli::run_cli(std::env::args_os()));
}
