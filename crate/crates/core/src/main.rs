fn main() {
    std::process::exit(epigrowth::report::run(std::env::args_os()));
}
