fn main() {
    std::process::exit(gridsafe::cli::run(std::env::args_os()));
}
