fn main() {
    std::process::exit(qkd_sim::app::main_with(std::env::args_os()));
}
