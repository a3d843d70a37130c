fn main() -> std::process::ExitCode {
    admitrag::cli::run()
}
