//! Write a small synthetic dataset to disk and describe one sample.
//!
//! cargo run --release --example generate -- /tmp/fume-data

use fume::net::Modality;
use fume::synthgas::{build_dataset, Dataset, PhCounts, Split, GAS};

fn main() -> fume::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "fume-data".into());
    let counts: PhCounts = "6.5:20,5.9:20,5.0:20".parse()?;
    let manifest = build_dataset(&counts, 7, 64, &dir)?;
    for split in Split::ALL {
        println!("{split}: {} samples", manifest.split(split).count());
    }

    let data = Dataset::load(&dir)?;
    let s = &data.samples[0];
    println!("\n{} (pH {}, {})", s.id, s.pair.ph, s.pair.label.name());
    for m in Modality::BOTH {
        if !s.pair.is_present(m) {
            println!("  {}: absent", m.key());
            continue;
        }
        let mask = s.pair.mask(m);
        let frame = s.pair.frame(m);
        let gas: Vec<f64> = frame.data().iter().zip(mask.data()).filter(|(_, &l)| l == GAS).map(|(&v, _)| v as f64).collect();
        println!(
            "  {}: {:.1}% gas pixels, mean gas intensity {:.1}",
            m.key(),
            100.0 * gas.len() as f64 / mask.data().len() as f64,
            gas.iter().sum::<f64>() / gas.len() as f64
        );
    }
    println!("\nframes and masks are binary PGM files under {dir}");
    Ok(())
}
