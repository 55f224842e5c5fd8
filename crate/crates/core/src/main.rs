fn main() {
    std::process::exit(lsqd::cli::main());
}
