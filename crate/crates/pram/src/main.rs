fn main() {
    // Die quietly on SIGPIPE (e.g. `pram estimate ... | head`) instead of
    // panicking when stdout closes mid-write.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    std::process::exit(pram::cli::run());
}
