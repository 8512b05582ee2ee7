fn main() {
    std::process::exit(warpreg_cli::main_with(std::env::args_os()));
}
