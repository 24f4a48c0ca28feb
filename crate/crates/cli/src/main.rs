fn main() {
    std::process::exit(d2v_cli::run(std::env::args_os()));
}
