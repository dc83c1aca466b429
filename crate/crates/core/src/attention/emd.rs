use super::AttentionError;

/// Tolerance on `Σp = 1` accepted by [`emd_1d`].
pub const MASS_TOLERANCE: f64 = 1e-6;

/// 1-Wasserstein distance between two distributions on positions
/// `0..len` with unit spacing: `Σ_i |CDF_p(i) − CDF_q(i)|`.
pub fn emd_1d(p: &[f64], q: &[f64]) -> Result<f64, AttentionError> {
    if p.len() != q.len() {
        return Err(AttentionError::LengthMismatch(p.len(), q.len()));
    }
    for v in [p, q] {
        let mass: f64 = v.iter().sum();
        if (mass - 1.0).abs() > MASS_TOLERANCE || v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(AttentionError::NotDistribution(mass));
        }
    }
    Ok(emd_unchecked(p, q))
}

/// [`emd_1d`] without validation. Exactly symmetric in its arguments.
pub(crate) fn emd_unchecked(p: &[f64], q: &[f64]) -> f64 {
    let (mut cp, mut cq, mut total) = (0.0, 0.0, 0.0);
    // The last CDF difference is the mass mismatch, zero for distributions.
    for (a, b) in p.iter().zip(q).take(p.len().saturating_sub(1)) {
        cp += a;
        cq += b;
        total += (cp - cq).abs();
    }
    total
}
