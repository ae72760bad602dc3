fn main() {
    std::process::exit(neurt_fdr::cli::run(std::env::args_os()));
}
