//! Classification, region, boundary and efficiency metrics.

pub mod boundary;
pub mod classification;
pub mod efficiency;
pub mod region;
pub mod report;

pub use boundary::{asd, boundary, distance_transform, hd95, nearest_rank, pooled_distances};
pub use classification::{argmax, classification_metrics, ClassificationMetrics, ConfusionMatrix};
pub use efficiency::{bench_latency, count_macs, count_params, latency_pair, BenchProtocol, BenchResult};
pub use region::{dice_coeff, iou, Overlap, RegionAccumulator};
pub use report::{EvalAccumulator, MetricsReport, GAS};
