//! One forward pass through the network, looking at intermediate features:
//! encoder outputs, the attention gates and the channel-fusion weights.

use fume::harness::Batch;
use fume::kernels::ForwardOptions;
use fume::net::{FumeNet, Modality, Variant};
use fume::synthgas::synth_pair;

fn main() -> fume::Result<()> {
    let net = FumeNet::build(Variant::Fume, 0)?;
    let pairs = [synth_pair(6.5, 1, 64)?, synth_pair(5.0, 2, 64)?];
    let batch = Batch::new(vec!["healthy".into(), "acidotic".into()], &[&pairs[0], &pairs[1]])?;
    let tape = net.forward_tape(&batch.frames[0], &batch.frames[1], ForwardOptions::eval())?;

    for m in Modality::BOTH {
        for stage in ["low", "high", "attended"] {
            let t = net.tap(&tape, &format!("{}.{stage}", m.key())).expect("tapped");
            println!("{}.{stage:<9} {:?}", m.key(), t.shape());
        }
        let gamma = net.params().by_name(&format!("attn_{}.gamma", m.key())).expect("gate").data()[0];
        println!("{} attention gate {gamma} (the block starts as an identity)", m.key());
    }
    let gates = net.tap(&tape, "fusion.gates").expect("gated fusion");
    let half = gates.shape()[1] / 2;
    for (i, id) in batch.ids.iter().enumerate() {
        let row = &gates.data()[i * 2 * half..(i + 1) * 2 * half];
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        println!("{id}: mean fusion weight co2 {:.4}, ch4 {:.4}", mean(&row[..half]), mean(&row[half..]));
    }
    let out = net.outputs(&tape);
    println!("class logits {:?}", out.class_logits.expect("head").data());
    Ok(())
}
