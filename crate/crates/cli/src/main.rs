fn main() {
    std::process::exit(bodyshape_cli::commands::main_with_args(std::env::args_os()));
}
