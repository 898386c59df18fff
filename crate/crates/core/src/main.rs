fn main() {
    std::process::exit(keydist::cli::main_from(std::env::args_os()));
}
