fn main() -> std::process::ExitCode {
    dimlab::cli::main()
}
