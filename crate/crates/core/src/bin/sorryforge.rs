fn main() {
    std::process::exit(sorryforge::cli::dispatch(std::env::args_os()));
}
