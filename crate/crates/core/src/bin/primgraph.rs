fn main() {
    std::process::exit(primgraph::cli::run(std::env::args_os()));
}
