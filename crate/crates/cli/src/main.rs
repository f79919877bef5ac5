fn main() {
    std::process::exit(vodsim_cli::dispatch(std::env::args_os()));
}
