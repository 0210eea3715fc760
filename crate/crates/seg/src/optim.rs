//! Adam and the cosine warm-restart learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    /// Cosine annealing from the base rate to `min_lr`, restarting every
    /// `period_epochs`; advanced per step.
    WarmRestarts { period_epochs: usize, min_lr: f64 },
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::WarmRestarts {
            period_epochs: 5,
            min_lr: 0.0,
        }
    }
}

impl Schedule {
    pub fn lr(&self, base: f64, epoch: usize, step: usize, steps_per_epoch: usize) -> f64 {
        match *self {
            Schedule::Constant => base,
            Schedule::WarmRestarts { period_epochs, min_lr } => {
                let period = period_epochs.max(1) as f64;
                let t = (epoch % period_epochs.max(1)) as f64 + step as f64 / steps_per_epoch.max(1) as f64;
                min_lr + 0.5 * (base - min_lr) * (1.0 + (std::f64::consts::PI * t / period).cos())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    #[serde(skip)]
    m: Vec<f32>,
    #[serde(skip)]
    v: Vec<f32>,
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn step<T: Real>(&mut self, params: &mut [T], grads: &[T], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let step = (lr * c2.sqrt() / c1) as f32;
        let eps = (self.eps * c2.sqrt()) as f32;
        for i in 0..params.len() {
            let g = grads[i].to_f64() as f32;
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let delta = step * self.m[i] / (self.v[i].sqrt() + eps);
            params[i] -= T::from_f64(delta as f64);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_restarts() {
        let s = Schedule::default();
        assert_eq!(s.lr(1.0, 0, 0, 10), 1.0);
        assert!((s.lr(1.0, 2, 5, 10) - 0.5).abs() < 1e-12);
        assert_eq!(s.lr(1.0, 5, 0, 10), 1.0);
        assert!(s.lr(1.0, 4, 9, 10) < 0.01);
        assert_eq!(Schedule::Constant.lr(0.3, 7, 1, 2), 0.3);
    }

    #[test]
    fn adam_first_step_is_lr_sized_and_zero_lr_is_identity() {
        let mut p = vec![1.0f32, -2.0, 0.5];
        let g = vec![0.3f32, -4.0, 1e-3];
        let mut opt = Adam::new(3);
        let before = p.clone();
        opt.step(&mut p, &g, 0.0);
        assert_eq!(p, before);
        let mut opt = Adam::new(3);
        opt.step(&mut p, &g, 0.01);
        for ((a, b), gi) in p.iter().zip(&before).zip(&g) {
            assert!(((b - a) - 0.01 * gi.signum()).abs() < 1e-4);
        }
    }

    #[test]
    fn adam_minimises_a_quadratic() {
        let mut p = vec![3.0f64, -1.5];
        let mut opt = Adam::new(2);
        for _ in 0..3000 {
            let g = vec![2.0 * p[0], 8.0 * p[1]];
            opt.step(&mut p, &g, 0.01);
        }
        assert!(p[0].abs() < 1e-2 && p[1].abs() < 1e-2);
    }
}
