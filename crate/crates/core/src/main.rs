fn main() -> std::process::ExitCode {
    lleaks::cli::main()
}
