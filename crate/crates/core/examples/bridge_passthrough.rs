//! A bridge adapter speaking the NDJSON protocol on stdin/stdout. Its model
//! resamples the training rows, so it scores like Train-Copy. Build it and
//! point the CLI at the binary:
//!
//!     cargo build --example bridge_passthrough
//!     tabbench tune --model bridge:target/debug/examples/bridge_passthrough ...

fn main() {
    let stdin = std::io::stdin();
    if let Err(e) = tabbench::bridge::serve_passthrough(stdin.lock(), std::io::stdout().lock()) {
        eprintln!("bridge_passthrough: {e}");
        std::process::exit(1);
    }
}
