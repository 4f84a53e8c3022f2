fn main() {
    std::process::exit(kd_cli::run(std::env::args_os()));
}
