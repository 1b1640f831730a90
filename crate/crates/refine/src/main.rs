fn main() {
    std::process::exit(refine::run(std::env::args_os()));
}
