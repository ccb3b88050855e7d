fn main() {
    std::process::exit(ngse::cli::cli_main(std::env::args_os()));
}
