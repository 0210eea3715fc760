//! Attention-gated encoder-decoder. Each encoder level is two
//! conv-norm-relu stages; decoder levels upsample with a stride-2 transposed
//! convolution, gate the matching skip with an additive attention gate,
//! concatenate and convolve. A 1×1 head produces six class logits.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use vesselid_core::rng;

use crate::error::{Result, SegError};
use crate::layers::{
    maxpool2, maxpool2_backward, relu, relu_backward, sigmoid, softmax, Conv1, Conv3, ConvT2, Init, Norm, NormCache,
    ParamLayout, ParamSpec,
};
use crate::real::Real;

pub const CLASSES: usize = 6;
/// Scales the head initialisation so untrained outputs start near uniform.
pub const HEAD_GAIN: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Resolution levels including the bottleneck.
    pub levels: usize,
    pub base_channels: usize,
    /// Bottleneck width; `None` continues the doubling pattern.
    pub bottleneck_channels: Option<usize>,
    pub attention: bool,
    pub input_width: usize,
    pub input_height: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            levels: 3,
            base_channels: 16,
            bottleneck_channels: None,
            attention: true,
            input_width: 112,
            input_height: 256,
        }
    }
}

impl ModelConfig {
    pub fn with_input(mut self, (width, height): (usize, usize)) -> Self {
        self.input_width = width;
        self.input_height = height;
        self
    }

    pub fn channels(&self) -> Vec<usize> {
        (0..self.levels)
            .map(|l| match (l + 1 == self.levels, self.bottleneck_channels) {
                (true, Some(b)) => b,
                _ => self.base_channels << l,
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels < 1 || self.levels > 8 {
            return Err(SegError::config(format!("levels must be in 1..=8, got {}", self.levels)));
        }
        if self.base_channels == 0 || self.bottleneck_channels == Some(0) {
            return Err(SegError::config("channel counts must be positive"));
        }
        let div = 1usize << (self.levels - 1);
        if self.input_width == 0
            || self.input_height == 0
            || self.input_width % div != 0
            || self.input_height % div != 0
        {
            return Err(SegError::config(format!(
                "input {}x{} must be a positive multiple of {div} for {} levels",
                self.input_width, self.input_height, self.levels
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Block {
    c1: Conv3,
    n1: Norm,
    c2: Conv3,
    n2: Norm,
}

struct BlockTape<T> {
    col1: Vec<T>,
    nc1: NormCache<T>,
    a1: Vec<T>,
    col2: Vec<T>,
    nc2: NormCache<T>,
    out: Vec<T>,
}

impl Block {
    fn new(layout: &mut ParamLayout, name: &str, cin: usize, cout: usize) -> Self {
        Self {
            c1: Conv3::new(layout, &format!("{name}.conv1"), cin, cout),
            n1: Norm::new(layout, &format!("{name}.norm1"), cout),
            c2: Conv3::new(layout, &format!("{name}.conv2"), cout, cout),
            n2: Norm::new(layout, &format!("{name}.norm2"), cout),
        }
    }

    fn forward<T: Real>(&self, p: &[T], x: &[T], h: usize, w: usize) -> BlockTape<T> {
        let hw = h * w;
        let (z1, col1) = self.c1.forward(p, x, h, w);
        let (mut a1, nc1) = self.n1.forward(p, &z1, hw);
        relu(&mut a1);
        let (z2, col2) = self.c2.forward(p, &a1, h, w);
        let (mut out, nc2) = self.n2.forward(p, &z2, hw);
        relu(&mut out);
        BlockTape {
            col1,
            nc1,
            a1,
            col2,
            nc2,
            out,
        }
    }

    fn backward<T: Real>(&self, p: &[T], g: &mut [T], t: &BlockTape<T>, mut d: Vec<T>, h: usize, w: usize) -> Vec<T> {
        let hw = h * w;
        relu_backward(&t.out, &mut d);
        let d = self.n2.backward(p, g, &t.nc2, &d, hw);
        let mut d = self.c2.backward(p, g, &t.col2, &d, h, w);
        relu_backward(&t.a1, &mut d);
        let d = self.n1.backward(p, g, &t.nc1, &d, hw);
        self.c1.backward(p, g, &t.col1, &d, h, w)
    }
}

/// `out = x ⊙ σ(ψ·relu(Wg·g + Wx·x + b) + bψ)`, one coefficient per pixel.
#[derive(Clone, Debug)]
struct Gate {
    wg: Conv1,
    wx: Conv1,
    psi: Conv1,
}

struct GateTape<T> {
    q: Vec<T>,
    alpha: Vec<T>,
}

impl Gate {
    fn new(layout: &mut ParamLayout, name: &str, cg: usize, cx: usize) -> Self {
        let inter = (cx / 2).max(1);
        Self {
            wg: Conv1::new(layout, &format!("{name}.wg"), cg, inter),
            wx: Conv1::new(layout, &format!("{name}.wx"), cx, inter),
            psi: Conv1::new(layout, &format!("{name}.psi"), inter, 1),
        }
    }

    fn forward<T: Real>(&self, p: &[T], g: &[T], x: &[T], hw: usize) -> (Vec<T>, GateTape<T>) {
        let mut q = self.wg.forward(p, g, hw);
        for (a, b) in q.iter_mut().zip(self.wx.forward(p, x, hw)) {
            *a += b;
        }
        relu(&mut q);
        let alpha: Vec<T> = self.psi.forward(p, &q, hw).into_iter().map(sigmoid).collect();
        let mut out = x.to_vec();
        for c in 0..self.wx.cin {
            for (o, &a) in out[c * hw..(c + 1) * hw].iter_mut().zip(&alpha) {
                *o *= a;
            }
        }
        (out, GateTape { q, alpha })
    }

    /// Returns `(d_g, d_x)`.
    fn backward<T: Real>(
        &self,
        p: &[T],
        grad: &mut [T],
        t: &GateTape<T>,
        g: &[T],
        x: &[T],
        dout: &[T],
        hw: usize,
    ) -> (Vec<T>, Vec<T>) {
        let mut dx = vec![T::ZERO; x.len()];
        let mut dalpha = vec![T::ZERO; hw];
        for c in 0..self.wx.cin {
            let r = c * hw..(c + 1) * hw;
            for i in 0..hw {
                dx[r.start + i] = dout[r.start + i] * t.alpha[i];
                dalpha[i] += dout[r.start + i] * x[r.start + i];
            }
        }
        for (d, &a) in dalpha.iter_mut().zip(&t.alpha) {
            *d *= a * (T::ONE - a);
        }
        let mut dq = self.psi.backward(p, grad, &t.q, &dalpha, hw);
        relu_backward(&t.q, &mut dq);
        let dg = self.wg.backward(p, grad, g, &dq, hw);
        for (a, b) in dx.iter_mut().zip(self.wx.backward(p, grad, x, &dq, hw)) {
            *a += b;
        }
        (dg, dx)
    }
}

#[derive(Clone, Debug)]
struct Decoder {
    up: ConvT2,
    gate: Option<Gate>,
    block: Block,
}

/// Network topology with parameter offsets. Weights are held separately so
/// the same topology runs in `f32` and `f64`.
#[derive(Clone, Debug)]
pub struct Network {
    config: ModelConfig,
    encoders: Vec<Block>,
    /// Indexed by level, `decoders[l]` produces level `l` from level `l + 1`.
    decoders: Vec<Decoder>,
    head: Conv1,
    specs: Vec<ParamSpec>,
    len: usize,
}

pub struct Tape<T> {
    enc: Vec<BlockTape<T>>,
    pools: Vec<Vec<u32>>,
    dec: Vec<DecTape<T>>,
    pub probabilities: Vec<T>,
    pub logits: Vec<T>,
}

struct DecTape<T> {
    up: Vec<T>,
    gate: Option<GateTape<T>>,
    block: BlockTape<T>,
}

impl<T: Real> Tape<T> {
    /// Hash of every ReLU on/off state and max-pool choice. Equal signatures
    /// mean two forward passes took the same piecewise-smooth branch.
    pub fn activation_signature(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |v: u64| {
            h ^= v;
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        };
        let mut relu_bits = |xs: &[T]| {
            for chunk in xs.chunks(64) {
                let mut bits = 0u64;
                for (i, &v) in chunk.iter().enumerate() {
                    if v > T::ZERO {
                        bits |= 1 << i;
                    }
                }
                eat(bits);
            }
        };
        for b in self.enc.iter().chain(self.dec.iter().map(|d| &d.block)) {
            relu_bits(&b.a1);
            relu_bits(&b.out);
        }
        for d in &self.dec {
            if let Some(g) = &d.gate {
                relu_bits(&g.q);
            }
        }
        for arg in &self.pools {
            for &a in arg {
                eat(a as u64);
            }
        }
        h
    }
}

impl Network {
    pub fn new(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let ch = config.channels();
        let mut layout = ParamLayout::default();
        let mut encoders = Vec::with_capacity(config.levels);
        let mut cin = 1;
        for (l, &c) in ch.iter().enumerate() {
            encoders.push(Block::new(&mut layout, &format!("enc{l}"), cin, c));
            cin = c;
        }
        let mut decoders = Vec::with_capacity(config.levels.saturating_sub(1));
        for l in 0..config.levels - 1 {
            let (c, below) = (ch[l], ch[l + 1]);
            decoders.push(Decoder {
                up: ConvT2::new(&mut layout, &format!("dec{l}.up"), below, c),
                gate: config.attention.then(|| Gate::new(&mut layout, &format!("dec{l}.gate"), c, c)),
                block: Block::new(&mut layout, &format!("dec{l}.block"), 2 * c, c),
            });
        }
        let head = Conv1::new(&mut layout, "head", ch[0], CLASSES);
        Ok(Self {
            config: config.clone(),
            encoders,
            decoders,
            head,
            specs: layout.specs,
            len: layout.len,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn param_count(&self) -> usize {
        self.len
    }

    /// Deterministic initial weights for `seed`.
    pub fn init<T: Real>(&self, seed: u64) -> Vec<T> {
        let mut p = vec![T::ZERO; self.len];
        for (i, spec) in self.specs.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(rng::derive(seed, "init", i as u64));
            let gain = if spec.name.starts_with("head.") { HEAD_GAIN } else { 1.0 };
            let slot = &mut p[spec.range()];
            match spec.init {
                Init::He { fan_in } => {
                    let normal = Normal::new(0.0, gain * (2.0 / fan_in as f64).sqrt()).expect("positive std");
                    for v in slot.iter_mut() {
                        *v = T::from_f64(normal.sample(&mut rng));
                    }
                }
                Init::Zeros => slot.fill(T::ZERO),
                Init::Ones => slot.fill(T::ONE),
            }
        }
        p
    }

    fn check(&self, p_len: usize, x_len: usize) -> Result<()> {
        if p_len != self.len {
            return Err(SegError::shape(format!("expected {} parameters, got {p_len}", self.len)));
        }
        let want = self.config.input_width * self.config.input_height;
        if x_len != want {
            return Err(SegError::shape(format!(
                "expected a {}x{} input ({want} pixels), got {x_len}",
                self.config.input_width, self.config.input_height
            )));
        }
        Ok(())
    }

    fn dims(&self, level: usize) -> (usize, usize) {
        (self.config.input_height >> level, self.config.input_width >> level)
    }

    /// Full forward pass recording everything the backward pass needs.
    pub fn forward<T: Real>(&self, p: &[T], x: &[T]) -> Result<Tape<T>> {
        self.check(p.len(), x.len())?;
        let levels = self.config.levels;
        let mut enc = Vec::with_capacity(levels);
        let mut pools = Vec::with_capacity(levels - 1);
        let mut input = x.to_vec();
        for (l, block) in self.encoders.iter().enumerate() {
            let (h, w) = self.dims(l);
            let tape = block.forward(p, &input, h, w);
            if l + 1 < levels {
                let (pooled, arg) = maxpool2(&tape.out, block.c2.cout, h, w);
                input = pooled;
                pools.push(arg);
            }
            enc.push(tape);
        }
        let mut dec: Vec<Option<DecTape<T>>> = (0..levels - 1).map(|_| None).collect();
        let mut below = enc[levels - 1].out.clone();
        for l in (0..levels - 1).rev() {
            let d = &self.decoders[l];
            let (h, w) = self.dims(l);
            let hw = h * w;
            let up = d.up.forward(p, &below, h / 2, w / 2);
            let skip = &enc[l].out;
            let (gated, gate) = match &d.gate {
                Some(gate) => {
                    let (o, t) = gate.forward(p, &up, skip, hw);
                    (o, Some(t))
                }
                None => (skip.clone(), None),
            };
            let mut cat = gated;
            cat.extend_from_slice(&up);
            let block = d.block.forward(p, &cat, h, w);
            below = block.out.clone();
            dec[l] = Some(DecTape { up, gate, block });
        }
        let hw = self.config.input_width * self.config.input_height;
        let logits = self.head.forward(p, &below, hw);
        let probabilities = softmax(&logits, CLASSES, hw);
        Ok(Tape {
            enc,
            pools,
            dec: dec.into_iter().map(|d| d.expect("every level decoded")).collect(),
            probabilities,
            logits,
        })
    }

    /// Probabilities only, channel-major `6×H×W`.
    pub fn infer<T: Real>(&self, p: &[T], x: &[T]) -> Result<Vec<T>> {
        Ok(self.forward(p, x)?.probabilities)
    }

    /// Accumulates parameter gradients into `g` given `∂L/∂logits`.
    pub fn backward<T: Real>(&self, p: &[T], g: &mut [T], tape: &Tape<T>, dlogits: &[T]) {
        let levels = self.config.levels;
        let hw = self.config.input_width * self.config.input_height;
        let top = if levels > 1 { &tape.dec[0].block.out } else { &tape.enc[0].out };
        let mut d = self.head.backward(p, g, top, dlogits, hw);
        // gradients flowing into each encoder output from its skip connection
        let mut skip_grads: Vec<Option<Vec<T>>> = (0..levels).map(|_| None).collect();
        for l in 0..levels - 1 {
            let dcfg = &self.decoders[l];
            let t = &tape.dec[l];
            let (h, w) = self.dims(l);
            let hw = h * w;
            let c = dcfg.block.c2.cout;
            let dcat = dcfg.block.backward(p, g, &t.block, d, h, w);
            let (dgated, dup_direct) = dcat.split_at(c * hw);
            let skip = &tape.enc[l].out;
            let (dskip, mut dup) = match (&dcfg.gate, &t.gate) {
                (Some(gate), Some(gt)) => {
                    let (dg, dx) = gate.backward(p, g, gt, &t.up, skip, dgated, hw);
                    (dx, dg)
                }
                _ => (dgated.to_vec(), vec![T::ZERO; c * hw]),
            };
            for (a, &b) in dup.iter_mut().zip(dup_direct) {
                *a += b;
            }
            skip_grads[l] = Some(dskip);
            d = dcfg.up.backward(p, g, &tape.enc[l + 1].out, &dup, h / 2, w / 2);
        }
        // `d` now holds the gradient at the deepest encoder output
        for l in (0..levels).rev() {
            let (h, w) = self.dims(l);
            if let Some(s) = skip_grads[l].take() {
                for (a, b) in d.iter_mut().zip(s) {
                    *a += b;
                }
            }
            let dx = self.encoders[l].backward(p, g, &tape.enc[l], d, h, w);
            if l == 0 {
                break;
            }
            let (ph, pw) = self.dims(l - 1);
            d = maxpool2_backward(&dx, &tape.pools[l - 1], self.encoders[l - 1].c2.cout * ph * pw);
        }
    }
}
