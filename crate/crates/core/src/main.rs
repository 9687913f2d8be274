fn main() {
    std::process::exit(pulsed_rabi::cli::main_with_args(std::env::args_os()));
}
