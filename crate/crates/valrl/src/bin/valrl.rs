use std::process::ExitCode;

fn main() -> ExitCode {
    valrl::cli::main_with(valrl::runner::AgentRegistry::with_builtins())
}
