fn main() -> std::process::ExitCode {
    duoatom::cli::main()
}
