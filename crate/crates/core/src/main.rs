fn main() {
    std::process::exit(rydoa::cli::main());
}
