fn main() -> std::process::ExitCode {
    lmcollapse::cli::main()
}
