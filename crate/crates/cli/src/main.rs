fn main() {
    std::process::exit(sdpkit_cli::main_entry());
}
