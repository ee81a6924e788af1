use super::Network;

/// Worst agreement between analytic and central-difference gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    /// Parameter index where the worst error occurred.
    pub worst_index: usize,
    pub checked: usize,
}

/// Relative error `|a - n| / max(|a|, |n|, 1e-6)` per parameter, maximized
/// over `indices` (all parameters when `None`). Runs the network in
/// inference mode so dropout stays off.
pub fn gradient_check<N: Network>(
    net: &N,
    params: &[f64],
    input: &N::Input,
    label: usize,
    indices: Option<&[usize]>,
    step: f64,
) -> GradientCheck {
    let mut analytic = vec![0.0; params.len()];
    net.loss_and_grad(params, input, label, None, &mut analytic);
    let all: Vec<usize> = (0..params.len()).collect();
    let indices = indices.unwrap_or(&all);

    let mut scratch = vec![0.0; params.len()];
    let mut probe = params.to_vec();
    let mut loss_at = |probe: &[f64]| {
        scratch.iter_mut().for_each(|g| *g = 0.0);
        net.loss_and_grad(probe, input, label, None, &mut scratch)
    };

    let mut worst = GradientCheck {
        max_relative_error: 0.0,
        worst_index: 0,
        checked: 0,
    };
    for &i in indices {
        let original = probe[i];
        probe[i] = original + step;
        let up = loss_at(&probe);
        probe[i] = original - step;
        let down = loss_at(&probe);
        probe[i] = original;
        let numeric = (up - down) / (2.0 * step);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        if rel > worst.max_relative_error {
            worst.max_relative_error = rel;
            worst.worst_index = i;
        }
        worst.checked += 1;
    }
    worst
}
