fn main() {
    std::process::exit(myoarm::cli::main_entry(std::env::args_os()));
}
