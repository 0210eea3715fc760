//! Trains the attention-gated network on a freshly augmented dataset and
//! prints the per-epoch table. Small by default; pass a sample count and an
//! epoch count to run at the full desk scale (2000 samples, 20 epochs).
//!
//! cargo run --example train -- [samples] [epochs]

use vesselid::core::pipeline::run;
use vesselid::core::preset::Preset;
use vesselid::core::reslice::DatasetGenerator;
use vesselid::seg::train::{initial_loss, prepare, train, uniform_loss, EpochStats, TrainHooks};
use vesselid::stages::RunConfig;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(100);
    let epochs: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(3);

    let mut cfg = RunConfig::new(Preset::Desk, 1);
    cfg.segmenter.train.epochs = epochs;
    let (_, _, lab) = run(&cfg.pipeline)?;
    let mut ds = cfg.pipeline.dataset.clone();
    ds.count = n;
    let samples = DatasetGenerator::new(&lab.reconstruction.volume, &lab.labels, ds)?.samples(0..n)?;
    let data = prepare(&samples, Preset::Desk.model_input());

    let init = initial_loss(&cfg.segmenter, &data)?;
    println!("initial loss {:.4} (uniform prediction {:.4})", init.total, uniform_loss(&cfg.segmenter));
    let hooks = TrainHooks {
        on_epoch: Some(Box::new(|e: &EpochStats| {
            eprintln!("epoch {:>2}  train {:.4}  val {:.4}  dice {:.4}", e.epoch, e.train_loss, e.val_loss, e.val_dice)
        })),
        nan_dump: None,
    };
    let (model, report) = train(&cfg.segmenter, &data, hooks)?;
    print!("{}", report.to_table());
    let path = std::env::temp_dir().join("vesselid-example.ckpt");
    model.save(&path, &report.checkpoint_id)?;
    println!("saved {} parameters to {}", model.params().len(), path.display());
    Ok(())
}
