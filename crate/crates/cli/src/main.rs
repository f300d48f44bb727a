fn main() {
    std::process::exit(loctime_cli::main_with(std::env::args_os()));
}
