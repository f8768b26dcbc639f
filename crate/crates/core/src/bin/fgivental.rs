fn main() -> std::process::ExitCode {
    fgivental::cli::main()
}
