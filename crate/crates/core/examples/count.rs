//! Parameter and MAC counts of every variant at dual 512x512 input.

use fume::net::{FumeNet, Variant};

fn main() -> fume::Result<()> {
    println!("{:<24}{:>12}{:>14}", "variant", "params", "MACs");
    for v in Variant::ALL {
        let net = FumeNet::build(v, 0)?;
        println!("{:<24}{:>12}{:>14}", v.name(), net.param_count(), net.macs(512, 512)?);
    }
    Ok(())
}
