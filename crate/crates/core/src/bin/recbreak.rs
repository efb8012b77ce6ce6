fn main() {
    std::process::exit(recbreak::cli_dispatch(std::env::args_os()));
}
