fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BSG_LOG", "warn")).init();
    std::process::exit(bsg::cli::run(std::env::args_os()));
}
