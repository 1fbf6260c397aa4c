fn main() {
    tvgnn_cli::init_logging();
    std::process::exit(tvgnn_cli::run(std::env::args_os()));
}
