fn main() {
    std::process::exit(reconlab_cli::run_cli(std::env::args_os()));
}
