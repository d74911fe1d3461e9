fn main() {
    std::process::exit(varlind::cli::main());
}
