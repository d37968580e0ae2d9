fn main() {
    let code = bosegas::cli::dispatch(std::env::args_os());
    std::process::exit(code);
}
