fn main() {
    std::process::exit(puzzlemix::cli::run(std::env::args_os()));
}
