fn main() -> std::process::ExitCode {
    wigner_pdc_cli::main_with_args(std::env::args_os())
}
