fn main() {
    std::process::exit(romcp_cli::run(std::env::args_os()));
}
