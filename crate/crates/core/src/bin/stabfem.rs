fn main() {
    std::process::exit(stabfem::cli::run(std::env::args_os()));
}
