fn main() {
    std::process::exit(qudit_bh::cli::run(std::env::args_os()));
}
