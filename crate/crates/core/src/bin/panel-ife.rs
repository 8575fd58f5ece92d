fn main() {
    std::process::exit(panel_ife::harness::cli::main_with_args(std::env::args_os()));
}
