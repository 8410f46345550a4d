fn main() -> std::process::ExitCode {
    scenemask_service::commands::main()
}
