fn main() {
    std::process::exit(agent_scada::cli::main());
}
