fn main() {
    std::process::exit(bn3d::cli::main_with_args(std::env::args_os()));
}
