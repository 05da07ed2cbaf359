fn main() {
    std::process::exit(distreg::cli::main_entry());
}
