fn main() -> std::process::ExitCode {
    backstep::cli::main()
}
