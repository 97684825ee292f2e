fn main() {
    std::process::exit(creepdb::app::cli::main_exit());
}
