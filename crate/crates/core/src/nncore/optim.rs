use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncore::ParamStore;

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamHyper {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamHyper {
            learning_rate,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.epsilon > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && self.beta1 > 0.0
            && (0.0..1.0).contains(&self.beta2)
            && self.beta2 > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "invalid Adam hyperparameters {self:?}"
            )))
        }
    }
}

/// One bias-corrected Adam update from the accumulated gradients, which
/// are zeroed afterwards.
///
/// A parameter whose gradient is identically zero is left alone: its value,
/// moments and step counter do not change.
pub fn adam_step(params: &mut ParamStore, hyper: &AdamHyper) -> Result<()> {
    hyper.validate()?;
    let AdamHyper {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = *hyper;
    for p in params.iter_mut() {
        if p.grad.data().iter().all(|g| *g == 0.0) {
            continue;
        }
        p.step += 1;
        let t = p.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        let grad = p.grad.data();
        let m = p.first_moment.data_mut();
        for (mi, g) in m.iter_mut().zip(grad) {
            *mi = beta1 * *mi + (1.0 - beta1) * g;
        }
        let v = p.second_moment.data_mut();
        for (vi, g) in v.iter_mut().zip(grad) {
            *vi = beta2 * *vi + (1.0 - beta2) * g * g;
        }
        let (m, v) = (p.first_moment.data(), p.second_moment.data());
        for ((w, mi), vi) in p.value.data_mut().iter_mut().zip(m).zip(v) {
            let m_hat = mi / bc1;
            let v_hat = vi / bc2;
            *w -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
        p.grad.fill(0.0);
    }
    if params.iter().any(|(_, p)| !p.value.is_finite()) {
        return Err(Error::NonFinite("adam_step"));
    }
    Ok(())
}
