fn main() {
    std::process::exit(momentbody::cli::run(std::env::args_os()));
}
