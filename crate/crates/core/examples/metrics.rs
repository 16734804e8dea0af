//! Region and boundary metrics between a ground-truth mask and a corrupted
//! copy, plus the report layout used by evaluation.

use fume::image::Image;
use fume::metrics::{asd, dice_coeff, hd95, iou, EvalAccumulator};
use fume::net::Modality;
use fume::synthgas::{synth_pair, GAS};

/// Shift every gas pixel `dx` columns to the right.
fn shifted(mask: &Image, dx: usize) -> Image {
    let mut out = mask.clone();
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) == GAS {
                out.set(x, y, 0);
            }
        }
        for x in 0..mask.width() - dx {
            if mask.get(x, y) == GAS {
                out.set(x + dx, y, GAS);
            }
        }
    }
    out
}

fn main() -> fume::Result<()> {
    let pair = synth_pair(5.6, 2, 64)?;
    let gt = pair.mask(Modality::Co2);
    println!("{:>6} {:>8} {:>8} {:>8} {:>8}", "shift", "iou", "dice", "hd95", "asd");
    for dx in [0, 1, 2, 4, 8] {
        let pred = shifted(gt, dx);
        println!(
            "{dx:>6} {:>8.4} {:>8.4} {:>8.3} {:>8.3}",
            iou(&pred, gt, GAS),
            dice_coeff(&pred, gt, GAS),
            hd95(&pred, gt, GAS).unwrap_or(f64::NAN),
            asd(&pred, gt, GAS).unwrap_or(f64::NAN)
        );
    }

    let mut acc = EvalAccumulator::new();
    acc.add_classification(pair.label.index(), Some(&[0.2, 0.1, 1.5]));
    acc.add_segmentation(Modality::Co2, &shifted(gt, 2), gt);
    acc.finish_sample();
    print!("\n{}", acc.report().to_text());
    Ok(())
}
