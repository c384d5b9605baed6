fn main() {
    std::process::exit(pfmcmc_cli::run(std::env::args_os()));
}
