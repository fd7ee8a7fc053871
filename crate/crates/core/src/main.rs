fn main() {
    std::process::exit(mapml::cli::run(std::env::args_os()));
}
