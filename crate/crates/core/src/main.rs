fn main() {
    std::process::exit(igap_core::cli::run(std::env::args_os()));
}
