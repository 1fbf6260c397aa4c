use super::tape::{NodeId, Tape};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Result of comparing reverse-mode gradients with central differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Max over all parameter entries of `|analytic − fd| / max(1, |fd|)`.
    pub max_rel_error: f64,
    /// Same statistic per parameter, in input order.
    pub per_param: Vec<f64>,
}

/// Compare the tape gradient of `f` against central differences with step `h`.
///
/// `f` receives a fresh tape with `params` already registered as trainable
/// leaves and must return the scalar loss node. It is re-run for every
/// perturbed entry, so it must be a pure function of the parameter values.
///
/// Fails with [`Error::KinkProximity`] when an `abs`, `asymmetric-abs` or
/// `relu` input that influences the loss lies within `10·h` of zero.
pub fn grad_check<F>(f: F, params: &[Tensor], h: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId>,
{
    grad_check_scaled(f, params, h, 1.0)
}

/// [`grad_check`] with the analytic gradient multiplied by `analytic_scale`.
/// Used to confirm that the checker notices a wrong backward rule.
pub fn grad_check_scaled<F>(f: F, params: &[Tensor], h: f64, analytic_scale: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId>,
{
    if !(1e-6..=1e-3).contains(&h) {
        return Err(Error::InvalidConfig(format!("finite-difference step {h} outside [1e-6, 1e-3]")));
    }

    let eval = |values: &[Tensor]| -> Result<(Tape, Vec<NodeId>, NodeId)> {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = values.iter().map(|t| tape.param(t.clone())).collect();
        let loss = f(&mut tape, &ids)?;
        Ok((tape, ids, loss))
    };

    let (tape, ids, loss) = eval(params)?;
    let grads = tape.backward(loss)?;
    if let Some((op, value)) = tape.find_kink(&grads, 10.0 * h) {
        return Err(Error::KinkProximity { op, value });
    }

    let mut work: Vec<Tensor> = params.to_vec();
    let mut per_param = Vec::with_capacity(params.len());
    for (p, id) in ids.iter().enumerate() {
        let analytic = grads.wrt(&tape, *id);
        let mut worst: f64 = 0.0;
        for e in 0..params[p].len() {
            let base = params[p].data()[e];
            work[p].data_mut()[e] = base + h;
            let (t_plus, _, l_plus) = eval(&work)?;
            work[p].data_mut()[e] = base - h;
            let (t_minus, _, l_minus) = eval(&work)?;
            work[p].data_mut()[e] = base;

            let fd = (t_plus.value(l_plus).item() - t_minus.value(l_minus).item()) / (2.0 * h);
            let an = analytic_scale * analytic.data()[e];
            worst = worst.max((an - fd).abs() / fd.abs().max(1.0));
        }
        per_param.push(worst);
    }
    let max_rel_error = per_param.iter().copied().fold(0.0, f64::max);
    Ok(GradCheckReport {
        max_rel_error,
        per_param,
    })
}
