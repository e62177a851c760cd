fn main() {
    if let Some(n) = std::env::var(tdtlab_cli::THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    std::process::exit(tdtlab_cli::run(std::env::args_os()));
}
