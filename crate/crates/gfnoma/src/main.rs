fn main() {
    std::process::exit(gfnoma::cli::cli_dispatch(std::env::args()));
}
