fn main() {
    std::process::exit(fairgl::cli::run_command(std::env::args_os()));
}
