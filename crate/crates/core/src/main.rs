fn main() -> std::process::ExitCode {
    fgvc_core::cli::main()
}
