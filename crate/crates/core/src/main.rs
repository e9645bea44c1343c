fn main() {
    std::process::exit(opinion_hawkes::cli::run_from(std::env::args_os()));
}
