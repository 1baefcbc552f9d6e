fn main() -> std::process::ExitCode {
    stepselect::cli::main()
}
