fn main() {
    env_logger::init();
    std::process::exit(motiongrid::cli::cli_main(std::env::args_os()));
}
