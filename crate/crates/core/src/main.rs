fn main() {
    std::process::exit(torus_lab::cli::main_with(std::env::args_os()));
}
