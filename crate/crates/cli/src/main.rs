fn main() {
    std::process::exit(quboml_cli::run(std::env::args_os()));
}
