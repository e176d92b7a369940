//! Central finite-difference gradient checking.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Outcome of a gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest relative error over the checked coordinates.
    pub max_rel_error: f64,
    /// Coordinate where the largest error occurred.
    pub worst_index: usize,
    pub checked: usize,
}

/// `|a − b| / max(1e-8, |a| + |b|)`
pub fn relative_error(fd: f64, analytic: f64) -> f64 {
    (fd - analytic).abs() / (fd.abs() + analytic.abs()).max(1e-8)
}

/// Compares `analytic_grad` against central differences of `loss_fn` at `params`.
///
/// When `max_coords` is smaller than the parameter count, a seeded uniform
/// sample of coordinates is checked instead of all of them.
pub fn grad_check<F>(
    mut loss_fn: F,
    params: &[f64],
    analytic_grad: &[f64],
    eps: f64,
    max_coords: usize,
    seed: u64,
) -> GradCheckReport
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(
        params.len(),
        analytic_grad.len(),
        "gradient length mismatch"
    );
    let coords: Vec<usize> = if max_coords >= params.len() {
        (0..params.len()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = sample(&mut rng, params.len(), max_coords).into_vec();
        idx.sort_unstable();
        idx
    };
    let mut probe = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: coords.first().copied().unwrap_or(0),
        checked: coords.len(),
    };
    for &i in &coords {
        let orig = probe[i];
        probe[i] = orig + eps;
        let plus = loss_fn(&probe);
        probe[i] = orig - eps;
        let minus = loss_fn(&probe);
        probe[i] = orig;
        let fd = (plus - minus) / (2.0 * eps);
        let err = relative_error(fd, analytic_grad[i]);
        if err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst_index = i;
        }
    }
    report
}
