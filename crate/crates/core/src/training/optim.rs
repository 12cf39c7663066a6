//! AdamW with decoupled weight decay, warmup schedule and plateau decay.

use crate::model::ModelParams;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One AdamW update of a flat tensor at 1-based step `step`.
#[allow(clippy::too_many_arguments)]
pub fn adamw_update<'a>(
    w: impl Iterator<Item = &'a mut f64>,
    g: impl Iterator<Item = &'a f64>,
    m: impl Iterator<Item = &'a mut f64>,
    v: impl Iterator<Item = &'a mut f64>,
    step: u64,
    lr: f64,
    weight_decay: f64,
    hyper: AdamHyper,
) {
    let AdamHyper { beta1, beta2, eps } = hyper;
    let bc1 = 1.0 - beta1.powf(step as f64);
    let bc2 = 1.0 - beta2.powf(step as f64);
    for (((w, &g), m), v) in w.zip(g).zip(m).zip(v) {
        *w -= lr * weight_decay * *w;
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *w -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Tracks epochs without validation improvement and the number of decays so far.
#[derive(Clone, Debug, PartialEq)]
pub struct PlateauTracker {
    pub best: f64,
    pub bad_epochs: usize,
    pub decays: u32,
    pub patience: usize,
}

impl PlateauTracker {
    pub fn new(patience: usize) -> Self {
        Self {
            best: f64::INFINITY,
            bad_epochs: 0,
            decays: 0,
            patience,
        }
    }

    /// Records one validation loss; returns true when it triggers a decay.
    pub fn observe(&mut self, val_loss: f64) -> bool {
        if val_loss < self.best {
            self.best = val_loss;
            self.bad_epochs = 0;
            return false;
        }
        self.bad_epochs += 1;
        if self.bad_epochs >= self.patience {
            self.decays += 1;
            self.bad_epochs = 0;
            return true;
        }
        false
    }
}

/// `base_lr · min(1, step / warmup) · factor^decays`.
pub fn lr_schedule(step: u64, base_lr: f64, warmup: u64, decays: u32, factor: f64) -> f64 {
    let ramp = if warmup == 0 {
        1.0
    } else {
        (step as f64 / warmup as f64).min(1.0)
    };
    base_lr * ramp * factor.powi(decays as i32)
}

/// Moments, step count, current learning rate and plateau state.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub step: u64,
    pub lr: f64,
    pub plateau: PlateauTracker,
    pub hyper: AdamHyper,
}

impl OptimizerState {
    pub fn new(params: &ModelParams, patience: usize) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
            lr: 0.0,
            plateau: PlateauTracker::new(patience),
            hyper: AdamHyper::default(),
        }
    }
}

/// Applies one AdamW step to every tensor. Non-finite gradients abort before
/// anything is modified.
pub fn adamw_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut OptimizerState,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    for (name, g) in grads.named_tensors() {
        if let Some(bad) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient of {name} at flat index {bad}"
            )));
        }
    }
    state.step += 1;
    state.lr = lr;
    let w = params.named_tensors_mut();
    let g = grads.named_tensors();
    let m = state.m.named_tensors_mut();
    let v = state.v.named_tensors_mut();
    if w.len() != g.len() || w.len() != m.len() || w.len() != v.len() {
        return Err(Error::Internal(
            "optimizer state does not match parameters".into(),
        ));
    }
    for ((((wn, mut w), (gn, g)), (_, mut m)), (_, mut v)) in w.into_iter().zip(g).zip(m).zip(v) {
        if wn != gn || w.shape() != g.shape() || m.shape() != w.shape() || v.shape() != w.shape() {
            return Err(Error::Internal(format!("shape mismatch for {wn}")));
        }
        adamw_update(
            w.iter_mut(),
            g.iter(),
            m.iter_mut(),
            v.iter_mut(),
            state.step,
            lr,
            weight_decay,
            state.hyper,
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warmup_ramp() {
        assert!((lr_schedule(250, 1e-3, 500, 0, 0.5) - 5e-4).abs() < 1e-18);
        assert_eq!(lr_schedule(500, 1e-3, 500, 0, 0.5), 1e-3);
        assert_eq!(lr_schedule(9000, 1e-3, 500, 0, 0.5), 1e-3);
        assert_eq!(lr_schedule(9000, 1e-3, 500, 2, 0.5), 2.5e-4);
        assert_eq!(lr_schedule(0, 1e-3, 0, 0, 0.5), 1e-3);
    }

    #[test]
    fn plateau_decays_after_patience() {
        let mut p = PlateauTracker::new(5);
        assert!(!p.observe(1.0));
        for _ in 0..4 {
            assert!(!p.observe(1.0));
        }
        assert!(p.observe(1.5));
        assert_eq!(p.decays, 1);
        assert!(!p.observe(0.5));
        assert_eq!(p.bad_epochs, 0);
    }
}
