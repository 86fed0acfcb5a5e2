fn main() {
    std::process::exit(fusekit::cli::cli_dispatch(std::env::args().skip(1)));
}
