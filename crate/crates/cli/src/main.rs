fn main() {
    std::process::exit(timecatcher_cli::main_with_args(std::env::args_os()));
}
