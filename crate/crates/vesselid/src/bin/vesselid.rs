fn main() {
    std::process::exit(vesselid::cli::run(std::env::args_os()));
}
