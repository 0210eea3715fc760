//! Builds the desk phantom, prints the branch tree and writes both volumes.
//!
//! cargo run --example phantom -- [seed] [out-dir]

use std::path::PathBuf;

use vesselid::core::io::{self, Compression};
use vesselid::core::phantom::label_shares;
use vesselid::core::pipeline::{build_phantom, PipelineSpec};
use vesselid::core::preset::Preset;
use vesselid::core::BranchId;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "phantom-out".into()));

    let spec = PipelineSpec::new(Preset::Desk, seed);
    let (tree, phantom) = build_phantom(&spec)?;
    let [nx, ny, nz] = phantom.labels.dims();
    println!("{nx}x{ny}x{nz} voxels at {} mm, seed {seed}", spec.phantom.spacing);
    let shares = label_shares(&phantom.labels);
    for (b, share) in BranchId::LABELED.into_iter().zip(shares) {
        let br = tree.branch(b).expect("labeled branch");
        println!(
            "{:<5} {:>5.1} mm long, radius {:.1}-{:.1} mm, {:>5.1}% of vessel voxels  ({})",
            b.name(),
            br.length(),
            br.radii.iter().copied().fold(f64::INFINITY, f64::min),
            br.radii.iter().copied().fold(0.0, f64::max),
            100.0 * share,
            b.description()
        );
    }

    io::write_volume(&out.join("intensity.vol"), &phantom.intensity, Compression::Deflate)?;
    io::write_volume(&out.join("labels.vol"), &phantom.labels, Compression::Deflate)?;
    println!("wrote {}", out.display());
    Ok(())
}
