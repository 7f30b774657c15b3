fn main() -> std::process::ExitCode {
    sarcasm_gat::cli::main()
}
