//! Weighted sum of pixel-mean cross-entropy and soft DICE over all six
//! classes, with the gradient taken directly with respect to the logits.

use serde::{Deserialize, Serialize};

use crate::layers::softmax_backward;
use crate::real::Real;
use crate::unet::CLASSES;

pub const DICE_SMOOTH: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub ce: f64,
    pub dice: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { ce: 1.0, dice: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub ce: f64,
    pub dice: f64,
    pub total: f64,
}

/// Loss and `∂loss/∂logits` for one sample. `labels` holds class ids in
/// `0..6`; `logits` and `probabilities` are channel-major.
pub fn loss_and_grad<T: Real>(
    logits: &[T],
    probabilities: &[T],
    labels: &[u8],
    weights: LossWeights,
) -> (LossValue, Vec<T>) {
    let hw = labels.len();
    debug_assert_eq!(logits.len(), CLASSES * hw);
    let inv_n = 1.0 / hw as f64;

    let mut ce = 0.0f64;
    for (i, &y) in labels.iter().enumerate() {
        let mut m = logits[i];
        for c in 1..CLASSES {
            if logits[c * hw + i] > m {
                m = logits[c * hw + i];
            }
        }
        let mut s = 0.0f64;
        for c in 0..CLASSES {
            s += (logits[c * hw + i] - m).to_f64().exp();
        }
        ce -= (logits[y as usize * hw + i] - m).to_f64() - s.ln();
    }
    ce *= inv_n;

    let mut dice_terms = [0.0f64; CLASSES];
    let mut dp = vec![T::ZERO; probabilities.len()];
    for c in 0..CLASSES {
        let p = &probabilities[c * hw..(c + 1) * hw];
        let (mut inter, mut psum, mut gsum) = (0.0f64, 0.0f64, 0.0f64);
        for (i, &y) in labels.iter().enumerate() {
            let pv = p[i].to_f64();
            psum += pv;
            if y as usize == c {
                inter += pv;
                gsum += 1.0;
            }
        }
        let num = 2.0 * inter + DICE_SMOOTH;
        let den = psum + gsum + DICE_SMOOTH;
        dice_terms[c] = num / den;
        // ∂(1 − mean D)/∂p_c(i)
        let scale = -weights.dice / CLASSES as f64 / (den * den);
        let on = T::from_f64(scale * (2.0 * den - num));
        let off = T::from_f64(scale * -num);
        for (i, &y) in labels.iter().enumerate() {
            dp[c * hw + i] = if y as usize == c { on } else { off };
        }
    }
    let dice = 1.0 - dice_terms.iter().sum::<f64>() / CLASSES as f64;

    let mut dz = softmax_backward(probabilities, &dp, CLASSES, hw);
    let k = T::from_f64(weights.ce * inv_n);
    for (i, &y) in labels.iter().enumerate() {
        for c in 0..CLASSES {
            let t = if y as usize == c { T::ONE } else { T::ZERO };
            dz[c * hw + i] += k * (probabilities[c * hw + i] - t);
        }
    }
    (
        LossValue {
            ce,
            dice,
            total: weights.ce * ce + weights.dice * dice,
        },
        dz,
    )
}
