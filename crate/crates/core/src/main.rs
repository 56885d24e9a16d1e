fn main() -> std::process::ExitCode {
    camfmc::cli::main()
}
