fn main() {
    let _ = env_logger::try_init();
    std::process::exit(fuseflow::cli::run_command(std::env::args_os()));
}
