fn main() -> std::process::ExitCode {
    clique_gossip::cli::main()
}
