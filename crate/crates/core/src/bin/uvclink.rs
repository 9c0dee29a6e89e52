fn main() {
    std::process::exit(uvclink::harness::cli_main(std::env::args_os()));
}
