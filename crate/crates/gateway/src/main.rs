fn main() {
    std::process::exit(mrlfd_gateway::cli::main_with(std::env::args_os()));
}
