fn main() {
    let code =
        fraclap::cli::main_with(std::env::args_os(), std::env::var_os(fraclap::cli::OUT_ENV));
    std::process::exit(code);
}
