use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vesselid_core::image::{GrayImage, LabelImage};
use vesselid_seg::gradcheck::{gradient_check, loss_with_grad};
use vesselid_seg::loss::LossWeights;
use vesselid_seg::optim::Adam;
use vesselid_seg::train::{fit, initial_loss, train, uniform_loss, TrainHooks, TrainSample};
use vesselid_seg::unet::{ModelConfig, Network};
use vesselid_seg::{SegError, SegmenterConfig, UNetModel};

fn random_sample(rng: &mut ChaCha8Rng, (w, h): (usize, usize)) -> TrainSample {
    TrainSample {
        image: GrayImage::from_fn(w, h, |_, _| rng.random::<f32>()),
        mask: LabelImage::from_fn(w, h, |_, _| rng.random_range(0..6u8)),
    }
}

fn small_config() -> ModelConfig {
    ModelConfig {
        levels: 2,
        base_channels: 4,
        attention: true,
        input_width: 16,
        input_height: 16,
        ..ModelConfig::default()
    }
}

#[test]
fn gradient_check_passes_on_five_seeds() {
    let cfg = small_config();
    let net = Network::new(&cfg).unwrap();
    assert!(net.param_count() <= 10_000);
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let params: Vec<f64> = net.init(seed);
        let image: Vec<f64> = (0..256).map(|_| rng.random()).collect();
        let labels: Vec<u8> = (0..256).map(|_| rng.random_range(0..6)).collect();
        let r = gradient_check(&cfg, &params, &image, &labels, LossWeights::default()).unwrap();
        assert_eq!(r.params_checked, net.param_count());
        assert!(r.max_rel_error < 1e-3, "seed {seed}: {r:?}");
    }
}

#[test]
fn gradient_check_refuses_large_models() {
    let cfg = ModelConfig {
        base_channels: 16,
        ..small_config()
    };
    let net = Network::new(&cfg).unwrap();
    assert!(net.param_count() > 10_000);
    let p: Vec<f64> = net.init(0);
    assert!(gradient_check(&cfg, &p, &[0.0; 256], &[0; 256], LossWeights::default()).is_err());
}

#[test]
fn ce_weight_scales_the_ce_gradient_linearly() {
    let cfg = small_config();
    let net = Network::new(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p: Vec<f64> = net.init(3);
    let image: Vec<f64> = (0..256).map(|_| rng.random()).collect();
    let labels: Vec<u8> = (0..256).map(|_| rng.random_range(0..6)).collect();
    let grad = |ce, dice| loss_with_grad(&net, &p, &image, &labels, LossWeights { ce, dice }).unwrap().1;
    let ce1 = grad(1.0, 0.0);
    let ce2 = grad(2.0, 0.0);
    let mixed1 = grad(1.0, 1.0);
    let mixed2 = grad(2.0, 1.0);
    let scale = ce1.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    for i in 0..p.len() {
        assert!((ce2[i] - 2.0 * ce1[i]).abs() <= 1e-12 * scale.max(1.0), "param {i}");
        // the CE component of the mixed gradient doubles too
        assert!(((mixed2[i] - mixed1[i]) - ce1[i]).abs() <= 1e-10 * scale.max(1.0), "param {i}");
    }
}

#[test]
fn zero_learning_rate_step_leaves_parameters_unchanged() {
    let net = Network::new(&small_config()).unwrap();
    let mut p: Vec<f32> = net.init(1);
    let before = p.clone();
    let g: Vec<f32> = (0..p.len()).map(|i| (i as f32 * 0.37).sin()).collect();
    let mut adam = Adam::new(p.len());
    adam.step(&mut p, &g, 0.0);
    assert_eq!(p, before);
    adam.step(&mut p, &g, 1e-3);
    assert_ne!(p, before);
}

#[test]
fn initial_loss_on_balanced_labels_matches_uniform_prediction() {
    let mut cfg = SegmenterConfig::default();
    cfg.model = cfg.model.with_input((56, 128));
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let samples: Vec<TrainSample> = (0..6).map(|_| random_sample(&mut rng, (56, 128))).collect();
    let got = initial_loss(&cfg, &samples).unwrap().total;
    let want = uniform_loss(&cfg);
    assert!((want - (6f64.ln() + 1.0 - 1.0 / 6.0)).abs() < 1e-12);
    assert!((got - want).abs() / want < 0.05, "initial {got} vs uniform {want}");
}

#[test]
fn predict_is_strict_and_deterministic() {
    let cfg = ModelConfig::default().with_input((56, 128));
    let model = UNetModel::init(&cfg, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let img = GrayImage::from_fn(56, 128, |_, _| rng.random::<f32>());
    let a = model.predict(&img).unwrap();
    let b = model.predict(&img).unwrap();
    assert_eq!(a, b);
    assert!(a.simplex_error() < 1e-6);
    let wrong = GrayImage::filled(128, 56, 0.5);
    assert!(matches!(model.predict(&wrong), Err(SegError::Shape(_))));

    let zero = GrayImage::filled(56, 128, 0.0);
    let p = model.predict(&zero).unwrap();
    assert!(p.probabilities().iter().all(|&v| (v - 1.0 / 6.0).abs() < 1e-6));
}

#[test]
fn checkpoint_file_round_trip_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let cfg = ModelConfig::default().with_input((56, 128));
    let model = UNetModel::init(&cfg, 9).unwrap();
    model.save(&path, "epoch-000").unwrap();
    let back = UNetModel::load(&path).unwrap();
    assert_eq!(back.params(), model.params());
    assert_eq!(back.config(), model.config());
    let img = GrayImage::from_fn(56, 128, |x, y| ((x * 7 + y * 3) % 11) as f32 / 10.0);
    assert_eq!(back.predict(&img).unwrap(), model.predict(&img).unwrap());
    let bytes = std::fs::read(&path).unwrap();
    back.save(&path, "epoch-000").unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bytes);

    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert!(UNetModel::load(&path).is_err());
}

fn tiny_train_config() -> SegmenterConfig {
    let mut cfg = SegmenterConfig::default();
    cfg.model = small_config();
    cfg.train.epochs = 2;
    cfg.train.batch_size = 4;
    cfg
}

#[test]
fn training_needs_twenty_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let samples: Vec<TrainSample> = (0..19).map(|_| random_sample(&mut rng, (16, 16))).collect();
    assert!(matches!(train(&tiny_train_config(), &samples, TrainHooks::default()), Err(SegError::Dataset(_))));
}

#[test]
fn non_finite_loss_aborts_and_saves_last_finite_state() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("last.ckpt");
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut samples: Vec<TrainSample> = (0..24).map(|_| random_sample(&mut rng, (16, 16))).collect();
    let poisoned = 13;
    samples[poisoned].image.set(3, 3, f32::NAN);
    let cfg = tiny_train_config();
    let hooks = TrainHooks {
        on_epoch: None,
        nan_dump: Some(dump.clone()),
    };
    let err = fit(&cfg, &samples, &samples[..4], hooks).unwrap_err();
    let SegError::NonFiniteLoss { epoch, step, saved } = err else {
        panic!("unexpected error {err}")
    };
    assert_eq!(epoch, 0);
    assert_eq!(saved.as_deref(), Some(dump.as_path()));
    let last = UNetModel::load(&dump).unwrap();
    assert!(last.params().iter().all(|v| v.is_finite()));
    let init = UNetModel::init(&cfg.model, vesselid_core::rng::derive(cfg.train.seed, "model", 0)).unwrap();
    // the dump holds the parameters after `step` finite updates
    assert_eq!(last.params() == init.params(), step == 0);
}

#[test]
fn training_is_deterministic_across_thread_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let samples: Vec<TrainSample> = (0..30).map(|_| random_sample(&mut rng, (16, 16))).collect();
    let cfg = tiny_train_config();
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| train(&cfg, &samples, TrainHooks::default()).unwrap())
    };
    let (m1, r1) = run(1);
    let (m3, r3) = run(3);
    assert_eq!(m1.params(), m3.params());
    assert_eq!(r1.without_timing(), r3.without_timing());
    assert_eq!(r1.epochs.len(), 2);
    let best = r1.epochs.iter().map(|e| e.val_dice).fold(f64::MIN, f64::max);
    assert_eq!(r1.best_val_dice, best);
    assert_eq!(r1.checkpoint_id, format!("epoch-{:03}", r1.best_epoch));
}
