fn main() {
    std::process::exit(mgvol::cli::main_with_args(std::env::args_os()));
}
