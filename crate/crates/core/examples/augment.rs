//! Apply random augmentation draws to one pair and save the results as PGM.
//!
//! cargo run --release --example augment -- /tmp/fume-aug

use std::fs;
use std::path::Path;

use fume::image::Image;
use fume::net::Modality;
use fume::synthgas::{augment, synth_pair, AugmentParams, GAS};

fn main() -> fume::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "fume-aug".into());
    fs::create_dir_all(&dir).map_err(|e| fume::Error::io(&dir, e))?;
    let pair = synth_pair(5.3, 4, 128)?;
    for seed in 0..4 {
        let p = AugmentParams::sample(seed);
        let out = augment(&pair, seed);
        println!(
            "draw {seed}: flip {:<5} angle {:>6.2} deg  co2 gas px {} -> {}",
            p.flip,
            p.angle_deg,
            pair.mask(Modality::Co2).count(GAS),
            out.mask(Modality::Co2).count(GAS)
        );
        for m in Modality::BOTH {
            let base = Path::new(&dir).join(format!("draw{seed}_{}", m.key()));
            out.frame(m).save_pgm(base.with_extension("pgm"))?;
            let k = out.mask(m);
            let visible = Image::new(k.width(), k.height(), k.data().iter().map(|l| l * 120).collect())?;
            visible.save_pgm(base.with_file_name(format!("draw{seed}_{}_mask.pgm", m.key())))?;
        }
    }
    Ok(())
}
