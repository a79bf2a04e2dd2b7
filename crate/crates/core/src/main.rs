fn main() {
    std::process::exit(polar_arcs::cli::main_with_args(std::env::args_os()));
}
