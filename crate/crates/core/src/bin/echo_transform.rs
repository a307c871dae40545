fn main() -> std::process::ExitCode {
    partran::adapter::echo::main_for(partran::adapter::Role::Transform)
}
