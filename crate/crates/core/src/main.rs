fn main() {
    let code = foliage::cli::run(std::env::args_os());
    std::process::exit(code);
}
