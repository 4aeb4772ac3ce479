fn main() {
    std::process::exit(searchgym::cli::run(std::env::args_os()));
}
