fn main() {
    std::process::exit(cutfem_darcy::cli::main_entry(std::env::args_os()));
}
