fn main() {
    std::process::exit(fidi_lab::cli::main_with_args(std::env::args_os()));
}
