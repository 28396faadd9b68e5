fn main() -> std::process::ExitCode {
    fescycle::cli::main()
}
