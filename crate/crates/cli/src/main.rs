fn main() {
    std::process::exit(mvnet_cli::run(std::env::args_os()));
}
