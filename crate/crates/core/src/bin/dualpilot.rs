fn main() {
    std::process::exit(dualpilot::cli::run(std::env::args_os()));
}
