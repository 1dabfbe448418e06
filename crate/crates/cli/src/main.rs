fn main() {
    std::process::exit(ddw_cli::run(std::env::args_os()));
}
