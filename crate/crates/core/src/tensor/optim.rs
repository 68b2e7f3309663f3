use super::{Grads, ParamStore};
use crate::{Error, Real, Result};

/// Plain SGD: `p <- p - lr * g` after rescaling all gradients so their global
/// L2 norm is at most `clip_norm`. Gradients are cleared afterwards. A
/// non-finite gradient aborts without touching the parameters.
pub fn sgd_step(params: &mut ParamStore, grads: &mut Grads, lr: Real, clip_norm: Option<Real>) -> Result<()> {
    if !grads.is_finite() {
        let bad = grads
            .iter()
            .find(|(_, g)| !g.is_finite())
            .map(|(id, _)| params.name(id))
            .unwrap_or("?");
        return Err(Error::NonFinite(alloc::format!("gradient of {bad}")));
    }
    let mut scale = lr;
    if let Some(clip) = clip_norm {
        let norm = grads.global_norm();
        if norm > clip && norm > 0.0 {
            scale *= clip / norm;
        }
    }
    for (id, g) in grads.iter() {
        params.get_mut(id).add_scaled(g, -scale);
    }
    grads.clear();
    Ok(())
}

/// Constant learning rate, halved every epoch after `halve_after` epochs.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LrSchedule {
    pub initial: Real,
    pub halve_after: usize,
}

impl LrSchedule {
    /// Rate for a 1-based epoch number.
    pub fn rate(&self, epoch: usize) -> Real {
        let halvings = epoch.saturating_sub(self.halve_after);
        let mut lr = self.initial;
        for _ in 0..halvings {
            lr *= 0.5;
        }
        lr
    }
}
