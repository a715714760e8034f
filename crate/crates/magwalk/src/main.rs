fn main() {
    std::process::exit(magwalk::cli::run(std::env::args_os()));
}
