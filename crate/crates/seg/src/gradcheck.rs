//! Finite-difference validation of the analytic parameter gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SegError};
use crate::loss::{loss_and_grad, LossWeights};
use crate::unet::{ModelConfig, Network};

pub const STEP: f64 = 1e-4;
/// Smallest step tried when the interval straddles an activation switch.
pub const MIN_STEP: f64 = 1e-7;
/// Parameter budget above which the exhaustive check is refused.
pub const MAX_PARAMS: usize = 10_000;
/// Gradients below this magnitude are compared absolutely.
pub const ABS_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub params_checked: usize,
    pub max_rel_error: f64,
    pub worst_param: String,
    /// Parameters whose `±STEP` interval crossed a ReLU or max-pool switch
    /// and were re-evaluated with a smaller step.
    pub refined: usize,
    /// Parameters still straddling a switch at `MIN_STEP`, compared anyway.
    pub unresolved: usize,
    pub loss: f64,
}

/// Loss and analytic gradient in `f64`.
pub fn loss_with_grad(net: &Network, params: &[f64], image: &[f64], labels: &[u8], w: LossWeights) -> Result<(f64, Vec<f64>)> {
    let tape = net.forward(params, image)?;
    let (v, dz) = loss_and_grad(&tape.logits, &tape.probabilities, labels, w);
    let mut g = vec![0.0; params.len()];
    net.backward(params, &mut g, &tape, &dz);
    Ok((v.total, g))
}

fn loss_and_signature(net: &Network, params: &[f64], image: &[f64], labels: &[u8], w: LossWeights) -> Result<(f64, u64)> {
    let tape = net.forward(params, image)?;
    let sig = tape.activation_signature();
    Ok((loss_and_grad(&tape.logits, &tape.probabilities, labels, w).0.total, sig))
}

/// Compares every analytic gradient entry against a central difference.
/// The step starts at [`STEP`] and is halved while the interval straddles an
/// activation switch, where the loss is not differentiable.
pub fn gradient_check(
    config: &ModelConfig,
    params: &[f64],
    image: &[f64],
    labels: &[u8],
    weights: LossWeights,
) -> Result<GradCheckReport> {
    let net = Network::new(config)?;
    if net.param_count() > MAX_PARAMS {
        return Err(SegError::config(format!(
            "gradient check is limited to {MAX_PARAMS} parameters, model has {}",
            net.param_count()
        )));
    }
    if labels.len() != image.len() || labels.iter().any(|&l| l as usize >= crate::unet::CLASSES) {
        return Err(SegError::shape("labels must match the image and lie in 0..6"));
    }
    let (loss, analytic) = loss_with_grad(&net, params, image, labels, weights)?;
    let base_sig = net.forward(params, image)?.activation_signature();
    let mut p = params.to_vec();
    let (mut worst, mut worst_i) = (0.0f64, 0usize);
    let (mut refined, mut unresolved) = (0usize, 0usize);
    for i in 0..p.len() {
        let orig = p[i];
        let mut h = STEP;
        let numeric = loop {
            p[i] = orig + h;
            let (up, s_up) = loss_and_signature(&net, &p, image, labels, weights)?;
            p[i] = orig - h;
            let (down, s_down) = loss_and_signature(&net, &p, image, labels, weights)?;
            let smooth = s_up == base_sig && s_down == base_sig;
            if smooth || h / 2.0 < MIN_STEP {
                if h < STEP {
                    refined += 1;
                }
                if !smooth {
                    unresolved += 1;
                }
                break (up - down) / (2.0 * h);
            }
            h /= 2.0;
        };
        p[i] = orig;
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(ABS_FLOOR);
        if rel > worst {
            worst = rel;
            worst_i = i;
        }
    }
    let worst_param = net
        .specs()
        .iter()
        .find(|s| s.range().contains(&worst_i))
        .map(|s| format!("{}[{}]", s.name, worst_i - s.offset))
        .unwrap_or_default();
    Ok(GradCheckReport {
        params_checked: p.len(),
        max_rel_error: worst,
        worst_param,
        refined,
        unresolved,
        loss,
    })
}
