fn main() {
    std::process::exit(sparse_deconv::cli::main_with_args(std::env::args_os()));
}
