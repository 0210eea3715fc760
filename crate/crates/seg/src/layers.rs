//! Per-sample layers over channel-major `C×H×W` buffers with hand-written
//! backward passes. Parameters live in one flat vector; layers hold offsets.

use serde::{Deserialize, Serialize};

use crate::real::Real;

pub const NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Normal with standard deviation `sqrt(2 / fan_in)`.
    He { fan_in: usize },
    Zeros,
    Ones,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub dims: Vec<usize>,
    pub offset: usize,
    pub init: Init,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Default)]
pub struct ParamLayout {
    pub specs: Vec<ParamSpec>,
    pub len: usize,
}

impl ParamLayout {
    pub fn add(&mut self, name: String, dims: Vec<usize>, init: Init) -> usize {
        let offset = self.len;
        let spec = ParamSpec {
            name,
            dims,
            offset,
            init,
        };
        self.len += spec.len();
        self.specs.push(spec);
        offset
    }
}

/// 3×3 convolution, stride 1, zero padding 1, no bias (always followed by
/// normalisation).
#[derive(Clone, Debug)]
pub struct Conv3 {
    pub cin: usize,
    pub cout: usize,
    w: usize,
}

impl Conv3 {
    pub fn new(layout: &mut ParamLayout, name: &str, cin: usize, cout: usize) -> Self {
        let w = layout.add(format!("{name}.weight"), vec![cout, cin, 3, 3], Init::He { fan_in: cin * 9 });
        Self { cin, cout, w }
    }

    fn k(&self) -> usize {
        self.cin * 9
    }

    /// Returns the output and the im2col buffer needed by `backward`.
    pub fn forward<T: Real>(&self, p: &[T], x: &[T], h: usize, w: usize) -> (Vec<T>, Vec<T>) {
        let hw = h * w;
        let col = im2col(x, self.cin, h, w);
        let mut y = vec![T::ZERO; self.cout * hw];
        T::gemm(self.cout, self.k(), hw, &p[self.w..self.w + self.cout * self.k()], false, &col, false, T::ZERO, &mut y);
        (y, col)
    }

    pub fn backward<T: Real>(&self, p: &[T], g: &mut [T], col: &[T], dy: &[T], h: usize, w: usize) -> Vec<T> {
        let (hw, k) = (h * w, self.k());
        let wr = self.w..self.w + self.cout * k;
        T::gemm(self.cout, hw, k, dy, false, col, true, T::ONE, &mut g[wr.clone()]);
        let mut dcol = vec![T::ZERO; k * hw];
        T::gemm(k, self.cout, hw, &p[wr], true, dy, false, T::ZERO, &mut dcol);
        col2im(&dcol, self.cin, h, w)
    }
}

fn im2col<T: Real>(x: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let hw = h * w;
    let mut col = vec![T::ZERO; c * 9 * hw];
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut col[((ci * 9) + ky * 3 + kx) * hw..][..hw];
                let (dx, dy) = (kx as isize - 1, ky as isize - 1);
                let x_lo = (-dx).max(0) as usize;
                let x_hi = (w as isize - dx).min(w as isize) as usize;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &plane[sy as usize * w..][..w];
                    let s0 = (x_lo as isize + dx) as usize;
                    row[y * w + x_lo..y * w + x_hi].copy_from_slice(&src[s0..s0 + (x_hi - x_lo)]);
                }
            }
        }
    }
    col
}

fn col2im<T: Real>(col: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let hw = h * w;
    let mut x = vec![T::ZERO; c * hw];
    for ci in 0..c {
        let plane = &mut x[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &col[((ci * 9) + ky * 3 + kx) * hw..][..hw];
                let (dx, dy) = (kx as isize - 1, ky as isize - 1);
                let x_lo = (-dx).max(0) as usize;
                let x_hi = (w as isize - dx).min(w as isize) as usize;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w + x_lo..y * w + x_hi];
                    let d0 = sy as usize * w + (x_lo as isize + dx) as usize;
                    for (d, &v) in plane[d0..d0 + src.len()].iter_mut().zip(src) {
                        *d += v;
                    }
                }
            }
        }
    }
    x
}

/// 1×1 convolution with bias.
#[derive(Clone, Debug)]
pub struct Conv1 {
    pub cin: usize,
    pub cout: usize,
    w: usize,
    b: usize,
}

impl Conv1 {
    pub fn new(layout: &mut ParamLayout, name: &str, cin: usize, cout: usize) -> Self {
        let w = layout.add(format!("{name}.weight"), vec![cout, cin], Init::He { fan_in: cin });
        let b = layout.add(format!("{name}.bias"), vec![cout], Init::Zeros);
        Self { cin, cout, w, b }
    }

    pub fn forward<T: Real>(&self, p: &[T], x: &[T], hw: usize) -> Vec<T> {
        let mut y = vec![T::ZERO; self.cout * hw];
        for o in 0..self.cout {
            y[o * hw..(o + 1) * hw].fill(p[self.b + o]);
        }
        T::gemm(self.cout, self.cin, hw, &p[self.w..self.w + self.cout * self.cin], false, x, false, T::ONE, &mut y);
        y
    }

    /// Accumulates parameter gradients; returns the input gradient.
    pub fn backward<T: Real>(&self, p: &[T], g: &mut [T], x: &[T], dy: &[T], hw: usize) -> Vec<T> {
        let wr = self.w..self.w + self.cout * self.cin;
        T::gemm(self.cout, hw, self.cin, dy, false, x, true, T::ONE, &mut g[wr.clone()]);
        for o in 0..self.cout {
            let mut s = T::ZERO;
            for &v in &dy[o * hw..(o + 1) * hw] {
                s += v;
            }
            g[self.b + o] += s;
        }
        let mut dx = vec![T::ZERO; self.cin * hw];
        T::gemm(self.cin, self.cout, hw, &p[wr], true, dy, false, T::ZERO, &mut dx);
        dx
    }
}

/// 2×2 transposed convolution with stride 2 and bias: doubles H and W.
#[derive(Clone, Debug)]
pub struct ConvT2 {
    pub cin: usize,
    pub cout: usize,
    w: usize,
    b: usize,
}

impl ConvT2 {
    pub fn new(layout: &mut ParamLayout, name: &str, cin: usize, cout: usize) -> Self {
        // rows are (out channel, dy, dx)
        let w = layout.add(format!("{name}.weight"), vec![cout, 2, 2, cin], Init::He { fan_in: cin });
        let b = layout.add(format!("{name}.bias"), vec![cout], Init::Zeros);
        Self { cin, cout, w, b }
    }

    pub fn forward<T: Real>(&self, p: &[T], x: &[T], h: usize, w: usize) -> Vec<T> {
        let hw = h * w;
        let mut tmp = vec![T::ZERO; self.cout * 4 * hw];
        T::gemm(self.cout * 4, self.cin, hw, &p[self.w..self.w + self.cout * 4 * self.cin], false, x, false, T::ZERO, &mut tmp);
        let (oh, ow) = (2 * h, 2 * w);
        let mut y = vec![T::ZERO; self.cout * oh * ow];
        for o in 0..self.cout {
            let bias = p[self.b + o];
            for d in 0..4 {
                let (dy, dx) = (d / 2, d % 2);
                let src = &tmp[(o * 4 + d) * hw..][..hw];
                for yy in 0..h {
                    let dst = &mut y[o * oh * ow + (2 * yy + dy) * ow..][..ow];
                    for xx in 0..w {
                        dst[2 * xx + dx] = src[yy * w + xx] + bias;
                    }
                }
            }
        }
        y
    }

    pub fn backward<T: Real>(&self, p: &[T], g: &mut [T], x: &[T], dy_full: &[T], h: usize, w: usize) -> Vec<T> {
        let hw = h * w;
        let (oh, ow) = (2 * h, 2 * w);
        let mut dtmp = vec![T::ZERO; self.cout * 4 * hw];
        for o in 0..self.cout {
            let mut bsum = T::ZERO;
            for d in 0..4 {
                let (dy, dx) = (d / 2, d % 2);
                let dst = &mut dtmp[(o * 4 + d) * hw..][..hw];
                for yy in 0..h {
                    let src = &dy_full[o * oh * ow + (2 * yy + dy) * ow..][..ow];
                    for xx in 0..w {
                        let v = src[2 * xx + dx];
                        dst[yy * w + xx] = v;
                        bsum += v;
                    }
                }
            }
            g[self.b + o] += bsum;
        }
        let wr = self.w..self.w + self.cout * 4 * self.cin;
        T::gemm(self.cout * 4, hw, self.cin, &dtmp, false, x, true, T::ONE, &mut g[wr.clone()]);
        let mut dx = vec![T::ZERO; self.cin * hw];
        T::gemm(self.cin, self.cout * 4, hw, &p[wr], true, &dtmp, false, T::ZERO, &mut dx);
        dx
    }
}

/// Instance normalisation with per-channel affine parameters.
#[derive(Clone, Debug)]
pub struct Norm {
    pub c: usize,
    gamma: usize,
    beta: usize,
}

pub struct NormCache<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
}

impl Norm {
    pub fn new(layout: &mut ParamLayout, name: &str, c: usize) -> Self {
        let gamma = layout.add(format!("{name}.gamma"), vec![c], Init::Ones);
        let beta = layout.add(format!("{name}.beta"), vec![c], Init::Zeros);
        Self { c, gamma, beta }
    }

    pub fn forward<T: Real>(&self, p: &[T], x: &[T], hw: usize) -> (Vec<T>, NormCache<T>) {
        let n = T::from_f64(hw as f64);
        let eps = T::from_f64(NORM_EPS);
        let mut y = vec![T::ZERO; x.len()];
        let mut xhat = vec![T::ZERO; x.len()];
        let mut inv_std = vec![T::ZERO; self.c];
        for ch in 0..self.c {
            let xs = &x[ch * hw..(ch + 1) * hw];
            let mut mean = T::ZERO;
            for &v in xs {
                mean += v;
            }
            mean = mean / n;
            let mut var = T::ZERO;
            for &v in xs {
                let d = v - mean;
                var += d * d;
            }
            var = var / n;
            let is = T::ONE / (var + eps).sqrt();
            inv_std[ch] = is;
            let (gm, bt) = (p[self.gamma + ch], p[self.beta + ch]);
            for i in 0..hw {
                let xh = (xs[i] - mean) * is;
                xhat[ch * hw + i] = xh;
                y[ch * hw + i] = gm * xh + bt;
            }
        }
        (y, NormCache { xhat, inv_std })
    }

    pub fn backward<T: Real>(&self, p: &[T], g: &mut [T], cache: &NormCache<T>, dy: &[T], hw: usize) -> Vec<T> {
        let n = T::from_f64(hw as f64);
        let mut dx = vec![T::ZERO; dy.len()];
        for ch in 0..self.c {
            let r = ch * hw..(ch + 1) * hw;
            let (dys, xh) = (&dy[r.clone()], &cache.xhat[r.clone()]);
            let (mut sum_dy, mut sum_dy_xh) = (T::ZERO, T::ZERO);
            for i in 0..hw {
                sum_dy += dys[i];
                sum_dy_xh += dys[i] * xh[i];
            }
            g[self.beta + ch] += sum_dy;
            g[self.gamma + ch] += sum_dy_xh;
            let gm = p[self.gamma + ch];
            let k = gm * cache.inv_std[ch] / n;
            let out = &mut dx[r];
            for i in 0..hw {
                out[i] = k * (n * dys[i] - sum_dy - xh[i] * sum_dy_xh);
            }
        }
        dx
    }
}

pub fn relu<T: Real>(x: &mut [T]) {
    for v in x.iter_mut() {
        if *v < T::ZERO {
            *v = T::ZERO;
        }
    }
}

/// Gradient through a ReLU given its output.
pub fn relu_backward<T: Real>(y: &[T], dy: &mut [T]) {
    for (d, &v) in dy.iter_mut().zip(y) {
        if v <= T::ZERO {
            *d = T::ZERO;
        }
    }
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::ZERO {
        T::ONE / (T::ONE + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::ONE + e)
    }
}

/// 2×2 max pooling with stride 2; `h` and `w` must be even. Returns the
/// output and the flat input index of each maximum (first on ties).
pub fn maxpool2<T: Real>(x: &[T], c: usize, h: usize, w: usize) -> (Vec<T>, Vec<u32>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut y = vec![T::ZERO; c * oh * ow];
    let mut arg = vec![0u32; c * oh * ow];
    for ch in 0..c {
        for yy in 0..oh {
            for xx in 0..ow {
                let base = ch * h * w + 2 * yy * w + 2 * xx;
                let mut best = base;
                for cand in [base + 1, base + w, base + w + 1] {
                    if x[cand] > x[best] {
                        best = cand;
                    }
                }
                let o = ch * oh * ow + yy * ow + xx;
                y[o] = x[best];
                arg[o] = best as u32;
            }
        }
    }
    (y, arg)
}

pub fn maxpool2_backward<T: Real>(dy: &[T], arg: &[u32], input_len: usize) -> Vec<T> {
    let mut dx = vec![T::ZERO; input_len];
    for (&d, &a) in dy.iter().zip(arg) {
        dx[a as usize] += d;
    }
    dx
}

/// Per-pixel softmax over `c` channel planes.
pub fn softmax<T: Real>(logits: &[T], c: usize, hw: usize) -> Vec<T> {
    let mut p = vec![T::ZERO; logits.len()];
    for i in 0..hw {
        let mut m = logits[i];
        for ch in 1..c {
            if logits[ch * hw + i] > m {
                m = logits[ch * hw + i];
            }
        }
        let mut s = T::ZERO;
        for ch in 0..c {
            let e = (logits[ch * hw + i] - m).exp();
            p[ch * hw + i] = e;
            s += e;
        }
        for ch in 0..c {
            p[ch * hw + i] = p[ch * hw + i] / s;
        }
    }
    p
}

/// Backpropagates `dp = ∂L/∂p` through the softmax.
pub fn softmax_backward<T: Real>(p: &[T], dp: &[T], c: usize, hw: usize) -> Vec<T> {
    let mut dz = vec![T::ZERO; p.len()];
    for i in 0..hw {
        let mut dot = T::ZERO;
        for ch in 0..c {
            dot += p[ch * hw + i] * dp[ch * hw + i];
        }
        for ch in 0..c {
            dz[ch * hw + i] = p[ch * hw + i] * (dp[ch * hw + i] - dot);
        }
    }
    dz
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv3(x: &[f64], wts: &[f64], cin: usize, cout: usize, h: usize, w: usize) -> Vec<f64> {
        let mut y = vec![0.0; cout * h * w];
        for o in 0..cout {
            for yy in 0..h {
                for xx in 0..w {
                    let mut s = 0.0;
                    for i in 0..cin {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let (sy, sx) = (yy as isize + ky as isize - 1, xx as isize + kx as isize - 1);
                                if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w {
                                    s += wts[((o * cin + i) * 3 + ky) * 3 + kx] * x[(i * h + sy as usize) * w + sx as usize];
                                }
                            }
                        }
                    }
                    y[(o * h + yy) * w + xx] = s;
                }
            }
        }
        y
    }

    #[test]
    fn conv3_matches_direct_convolution() {
        let mut layout = ParamLayout::default();
        let conv = Conv3::new(&mut layout, "c", 2, 3);
        let p: Vec<f64> = (0..layout.len).map(|i| ((i * 7 % 11) as f64 - 5.0) / 5.0).collect();
        let (h, w) = (5, 4);
        let x: Vec<f64> = (0..2 * h * w).map(|i| (i as f64 * 0.3).sin()).collect();
        let (y, _) = conv.forward(&p, &x, h, w);
        let expect = naive_conv3(&x, &p, 2, 3, h, w);
        for (a, b) in y.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn transposed_conv_places_blocks() {
        let mut layout = ParamLayout::default();
        let t = ConvT2::new(&mut layout, "t", 1, 1);
        let mut p = vec![0.0f64; layout.len];
        p[..4].copy_from_slice(&[1.0, 2.0, 3.0, 4.0]);
        p[4] = 0.5;
        let y = t.forward(&p, &[1.0, 10.0], 1, 2);
        assert_eq!(y, vec![1.5, 2.5, 10.5, 20.5, 3.5, 4.5, 30.5, 40.5]);
    }

    #[test]
    fn pooling_and_softmax() {
        let x = [1.0f64, 5.0, 2.0, 0.0, 3.0, 4.0, 7.0, 1.0];
        let (y, arg) = maxpool2(&x, 1, 2, 4);
        assert_eq!(y, vec![5.0, 7.0]);
        assert_eq!(maxpool2_backward(&[1.0, 2.0], &arg, 8), vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0]);
        let p = softmax(&[0.0f64, 0.0, 0.0], 3, 1);
        assert!(p.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!(sigmoid(-800.0f64).is_finite() && sigmoid(800.0f64) == 1.0);
    }

    #[test]
    fn norm_output_is_standardised() {
        let mut layout = ParamLayout::default();
        let n = Norm::new(&mut layout, "n", 2);
        let mut p = vec![0.0f64; layout.len];
        p[0] = 1.0;
        p[1] = 1.0;
        let x: Vec<f64> = (0..12).map(|i| (i * i) as f64).collect();
        let (y, _) = n.forward(&p, &x, 6);
        for ch in 0..2 {
            let s = &y[ch * 6..(ch + 1) * 6];
            let m: f64 = s.iter().sum::<f64>() / 6.0;
            let v: f64 = s.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / 6.0;
            assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-4);
        }
    }
}
