fn main() {
    std::process::exit(solenoid_core::cli::main_with(std::env::args_os()));
}
