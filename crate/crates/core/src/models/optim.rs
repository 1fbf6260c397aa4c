use super::{ParamSet, TrainConfig};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        let zeros = |p: &super::Param| Tensor::zeros(p.value.shape());
        Self {
            m: params.iter().map(zeros).collect(),
            v: params.iter().map(zeros).collect(),
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update. The ℓ2 term `2·l2·θ` is added to the
/// gradient of every decaying parameter first.
pub fn adam_step(params: &mut ParamSet, grads: &[Tensor], state: &mut AdamState, cfg: &TrainConfig) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} gradients and {} moment slots for {} parameters",
            grads.len(),
            state.m.len(),
            params.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (i, g) in grads.iter().enumerate() {
        let decay = if params.get(i).decay { 2.0 * cfg.l2 } else { 0.0 };
        if g.shape() != params.get(i).value.shape() {
            return Err(Error::DimensionMismatch(format!("gradient for {}", params.get(i).name)));
        }
        let theta = params.value_mut(i).data_mut();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (k, &gk) in g.data().iter().enumerate() {
            let gk = gk + decay * theta[k];
            m[k] = b1 * m[k] + (1.0 - b1) * gk;
            v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            theta[k] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
    }
    Ok(())
}
