fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TWOSCALE_LOG", "warn")).init();
    std::process::exit(twoscale_cli::cli::run(std::env::args_os()));
}
