fn main() {
    std::process::exit(cogmesh::cli::run(std::env::args_os()));
}
