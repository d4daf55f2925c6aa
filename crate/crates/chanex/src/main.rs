fn main() {
    std::process::exit(chanex::cli::main());
}
