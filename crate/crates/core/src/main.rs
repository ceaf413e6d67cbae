fn main() -> std::process::ExitCode {
    hdprec::cli::main()
}
