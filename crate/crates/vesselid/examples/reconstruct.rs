//! Simulates a freehand sweep over the phantom, reconstructs it and compares
//! the result with the phantom it was acquired from.
//!
//! cargo run --example reconstruct

use std::time::Instant;

use vesselid::core::pipeline::{acquire, build_phantom, reconstruct_labeled, PipelineSpec};
use vesselid::core::preset::Preset;
use vesselid::core::BranchId;

fn main() -> anyhow::Result<()> {
    let spec = PipelineSpec::new(Preset::Desk, 1);
    let (_, phantom) = build_phantom(&spec)?;

    let t = Instant::now();
    let sweep = acquire(&spec, &phantom);
    println!(
        "sweep: {} frames of {}x{} at {} mm pitch ({} outside the volume)",
        sweep.sequence.len(),
        spec.frame.width,
        spec.frame.height,
        spec.sweep.pitch,
        sweep.outside.len()
    );
    let lab = reconstruct_labeled(&spec, &phantom.labels, &sweep.sequence)?;
    let rec = &lab.reconstruction;
    println!("reconstructed in {:.2} s", t.elapsed().as_secs_f64());
    println!(
        "{} pixels splatted, {} skipped, {} voxels hit, {} filled",
        rec.stats.pixels_splatted,
        rec.stats.pixels_skipped,
        rec.stats.known_voxels,
        rec.stats.fill.as_ref().map_or(0, |f| f.filled)
    );

    let known = rec.known.data();
    let (mut err, mut n) = (0.0f64, 0usize);
    for (i, (&a, &b)) in rec.volume.data().iter().zip(phantom.intensity.data()).enumerate() {
        if known[i] != 0 {
            err += (a - b).abs() as f64;
            n += 1;
        }
    }
    println!("intensity MAE vs phantom {:.4}", err / n as f64);

    for b in BranchId::LABELED {
        let v = b.as_u8();
        let (mut inter, mut total) = (0usize, 0usize);
        for (&x, &y) in lab.labels.data().iter().zip(phantom.labels.data()) {
            inter += (x == v && y == v) as usize;
            total += (x == v) as usize + (y == v) as usize;
        }
        println!("{:<5} label DICE {:.3}", b.name(), 2.0 * inter as f64 / total.max(1) as f64);
    }
    Ok(())
}
