fn main() {
    std::process::exit(fedaf_cli::run(std::env::args_os()));
}
