//! Forward latency of every variant under a shortened protocol.
//!
//! cargo run --release --example bench -- 128 20 200

use fume::metrics::{bench_latency, BenchProtocol};
use fume::net::{FumeNet, Variant};

fn main() -> fume::Result<()> {
    let arg = |i: usize, default: usize| std::env::args().nth(i).and_then(|a| a.parse().ok()).unwrap_or(default);
    let size = arg(1, 64);
    let protocol = BenchProtocol {
        warmup: arg(2, 10),
        iterations: arg(3, 100),
    };
    println!("{size}x{size} frames, {} warmup + {} timed forwards", protocol.warmup, protocol.iterations);
    for v in Variant::ALL {
        let b = bench_latency(&FumeNet::build(v, 0)?, size, size, protocol)?;
        println!("{:<24}{:>10.3} ms{:>10.1} fps", v.name(), b.latency_ms, b.fps);
    }
    Ok(())
}
