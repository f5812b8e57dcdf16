fn main() -> std::process::ExitCode {
    gridmfg::cli::run(std::env::args_os())
}
