use super::{backward, bce_with_logit, Network};
use crate::signal::Label;
use crate::Result;

/// Denominator floor for the relative error; below it the comparison is absolute.
/// Rounding in the forward pass leaves up to about 1e-9 of noise in a step-1e-6
/// central difference, so 1e-6 of this floor is the smallest meaningful disagreement.
pub const REL_ERROR_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Parameter index (canonical order) where the worst error occurred.
    pub worst_param: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Compares [`backward`] against central differences
/// `(L(p + h) - L(p - h)) / 2h` for every parameter. The loss is evaluated from the
/// logit with [`bce_with_logit`].
///
/// The error for one parameter is `|a - n| / max(|a|, |n|, REL_ERROR_FLOOR)`.
pub fn finite_diff_check(
    net: &Network,
    epoch: &[f64],
    label: Label,
    step: f64,
) -> Result<GradCheck> {
    let (_, cache) = net.forward(epoch)?;
    let grads = backward(net, &cache, label)?;
    let t = label.as_f64();
    let mut probe = net.clone();
    let mut worst = GradCheck {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst_param: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    let mut max_abs: f64 = 0.0;
    for i in 0..net.n_params() {
        let orig = net.params()[i];
        probe.params_mut()[i] = orig + step;
        let up = bce_with_logit(probe.forward(epoch)?.1.logit(), t);
        probe.params_mut()[i] = orig - step;
        let down = bce_with_logit(probe.forward(epoch)?.1.logit(), t);
        probe.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        let analytic = grads.values()[i];
        let scale = analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
        let abs = (analytic - numeric).abs();
        max_abs = max_abs.max(abs);
        let err = abs / scale;
        if err > worst.max_rel_error || i == 0 {
            worst.max_rel_error = err;
            worst.worst_param = i;
            worst.analytic = analytic;
            worst.numeric = numeric;
        }
    }
    worst.max_abs_error = max_abs;
    Ok(worst)
}

/// Randomised gradient-check problem: a network of shape `arch` with He-normal
/// weights and small random biases, a standard-normal input epoch and a random label.
pub fn random_problem(
    arch: super::Architecture,
    seed: u64,
) -> Result<(Network, alloc::vec::Vec<f64>, Label)> {
    use crate::rng;
    use rand::Rng as _;

    let mut net = Network::init(arch, rng::derive_seed(seed, 0))?;
    let mut rng = rng::seeded(rng::derive_seed(seed, 1));
    let layout = net.layout();
    let bias_ranges = [
        layout.spatial_b.clone(),
        layout.temporal_b[0].clone(),
        layout.temporal_b[1].clone(),
        layout.fc_b..layout.fc_b + 1,
    ];
    for r in bias_ranges {
        for b in &mut net.params_mut()[r] {
            *b = 0.1 * rng::normal(&mut rng);
        }
    }
    let epoch = (0..arch.n_channels * arch.n_samples)
        .map(|_| rng::normal(&mut rng))
        .collect();
    let label = if rng.random::<bool>() {
        Label::Target
    } else {
        Label::NonTarget
    };
    Ok((net, epoch, label))
}
