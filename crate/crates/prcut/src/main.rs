fn main() {
    let argv: Vec<String> = std::env::args().collect();
    std::process::exit(prcut::cli::cli_main(&argv));
}
