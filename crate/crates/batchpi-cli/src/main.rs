fn main() {
    std::process::exit(batchpi_cli::run(std::env::args_os()));
}
