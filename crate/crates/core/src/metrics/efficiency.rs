use std::hint::black_box;
use std::time::Instant;

use crate::error::Result;
use crate::kernels::gradcheck::random_tensor;
use crate::net::FumeNet;

/// Trainable element count; shared tensors count once.
pub fn count_params(net: &FumeNet) -> usize {
    net.param_count()
}

/// MACs of one forward on a single `height x width` frame per stream.
pub fn count_macs(net: &FumeNet, height: usize, width: usize) -> Result<u64> {
    net.macs(height, width)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchProtocol {
    pub warmup: usize,
    pub iterations: usize,
}

impl Default for BenchProtocol {
    fn default() -> Self {
        BenchProtocol {
            warmup: 100,
            iterations: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchResult {
    pub latency_ms: f64,
    pub fps: f64,
    pub warmup_runs: usize,
    pub timed_runs: usize,
}

/// Latency and throughput pair with `fps * latency_ms == 1000` exactly in
/// floating point. The latency is moved by at most a few ulps to get there.
pub fn latency_pair(latency_ms: f64) -> (f64, f64) {
    let mut lat = latency_ms;
    for step in 0..64 {
        let fps = 1000.0 / lat;
        if fps * lat == 1000.0 {
            return (lat, fps);
        }
        let k = (step / 2 + 1) as u64;
        let bits = latency_ms.to_bits();
        lat = f64::from_bits(if step % 2 == 0 { bits + k } else { bits - k });
    }
    (latency_ms, 1000.0 / latency_ms)
}

/// Mean single-sample eval forward time after `protocol.warmup` untimed
/// runs. Run it with nothing else loading the machine.
pub fn bench_latency(net: &FumeNet, height: usize, width: usize, protocol: BenchProtocol) -> Result<BenchResult> {
    let co2 = random_tensor(&[1, 1, height, width], 1).map(|v| 0.5 + 0.5 * v);
    let ch4 = random_tensor(&[1, 1, height, width], 2).map(|v| 0.5 + 0.5 * v);
    let mut warmup_runs = 0;
    for _ in 0..protocol.warmup {
        black_box(net.forward(&co2, &ch4)?);
        warmup_runs += 1;
    }
    let mut timed_runs = 0;
    let start = Instant::now();
    for _ in 0..protocol.iterations {
        black_box(net.forward(&co2, &ch4)?);
        timed_runs += 1;
    }
    let total_ms = start.elapsed().as_secs_f64() * 1e3;
    let (latency_ms, fps) = latency_pair(total_ms / timed_runs.max(1) as f64);
    Ok(BenchResult {
        latency_ms,
        fps,
        warmup_runs,
        timed_runs,
    })
}
