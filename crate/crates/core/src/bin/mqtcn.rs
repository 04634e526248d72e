fn main() {
    std::process::exit(mqtcn::cli::run(std::env::args_os()));
}
