fn main() {
    std::process::exit(s3po::cli::run(std::env::args_os()));
}
