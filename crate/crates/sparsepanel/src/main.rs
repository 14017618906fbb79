fn main() {
    std::process::exit(sparsepanel::cli::main_with_args(std::env::args_os()));
}
