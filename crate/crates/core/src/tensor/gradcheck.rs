use super::{Result, Tape, Tensor, Var};

/// Finite-difference settings.
#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub eps: f64,
    /// Added to the denominator of the relative error so that coordinates
    /// whose true gradient is ~0 compare on an absolute scale.
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { eps: 1e-5, floor: 1e-6 }
    }
}

/// Compares the reverse-mode gradient of the scalar `f(x)` against central
/// differences, coordinate by coordinate, and returns the largest
/// `|analytic - numeric| / (max(|analytic|, |numeric|) + floor)`.
///
/// `f` is re-run on a fresh tape for every probe, so it must be a pure
/// function of `x`.
pub fn finite_difference_check<F>(f: F, x: &Tensor, cfg: &GradCheckConfig) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let out = f(&mut tape, xv)?;
    tape.backward(out)?;
    let analytic = tape
        .grad(xv)
        .map(<[f64]>::to_vec)
        .unwrap_or_else(|| vec![0.0; x.numel()]);

    let eval = |probe: Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let v = tape.leaf(probe);
        let out = f(&mut tape, v)?;
        Ok(tape.value(out).data()[0])
    };

    let mut worst: f64 = 0.0;
    for i in 0..x.numel() {
        let mut plus = x.clone();
        plus.data_mut()[i] += cfg.eps;
        let mut minus = x.clone();
        minus.data_mut()[i] -= cfg.eps;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * cfg.eps);
        let a = analytic[i];
        let err = (a - numeric).abs() / (a.abs().max(numeric.abs()) + cfg.floor);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::LabRng;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = LabRng::new(seed);
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
    }

    #[test]
    fn sum_is_exact_to_rounding() {
        let err = finite_difference_check(|t, x| Ok(t.sum(x)), &random(&[3, 4], 1), &GradCheckConfig::default()).unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn softmax_pick() {
        let err = finite_difference_check(
            |t, x| {
                let y = t.softmax_rows(x, None)?;
                t.pick(y, 3)
            },
            &random(&[2, 5], 2),
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn detects_a_corrupted_backward_rule() {
        let w = random(&[4, 3], 3);
        let f = |t: &mut Tape, x: Var| {
            t.corrupt_matmul_grad = Some(1.1);
            let wv = t.constant(w.clone());
            let y = t.matmul(x, wv)?;
            let y = t.mul(y, y)?;
            Ok(t.sum(y))
        };
        let err = finite_difference_check(f, &random(&[2, 4], 4), &GradCheckConfig::default()).unwrap();
        assert!(err > 1e-2, "{err}");
    }
}
