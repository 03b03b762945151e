fn main() {
    let argv: Vec<String> = std::env::args().collect();
    std::process::exit(driftloc_cli::run_command(&argv));
}
