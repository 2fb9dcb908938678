fn main() {
    std::process::exit(shapeqa::cli::run(std::env::args_os()));
}
