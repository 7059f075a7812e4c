use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Coordinate where the worst error occurred.
    pub worst_index: usize,
}

/// Compares analytic gradients with central finite differences.
///
/// Relative error per coordinate is `|fd - an| / max(1e-8, |fd| + |an|)`;
/// the maximum over coordinates is returned.
pub fn grad_check<F>(mut loss: F, params: &[f64], analytic: &[f64], h: f64) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> f64,
{
    if params.len() != analytic.len() {
        return Err(Error::invalid("params and analytic gradient differ in length"));
    }
    if h.is_nan() || h <= 0.0 {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let base = loss(params);
    let again = loss(params);
    if base.to_bits() != again.to_bits() {
        return Err(Error::invalid(format!("loss function is not deterministic ({base} vs {again})")));
    }
    let mut x = params.to_vec();
    let mut report = GradCheckReport { max_rel_error: 0.0, worst_index: 0 };
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let plus = loss(&x);
        x[i] = orig - h;
        let minus = loss(&x);
        x[i] = orig;
        let fd = (plus - minus) / (2.0 * h);
        let rel = (fd - analytic[i]).abs() / (fd.abs() + analytic[i].abs()).max(1e-8);
        if rel > report.max_rel_error {
            report = GradCheckReport { max_rel_error: rel, worst_index: i };
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    #[test]
    fn linear_loss_is_exact() {
        let c = [0.5, -1.5, 2.0];
        let loss = |w: &[f64]| w.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>();
        let r = grad_check(loss, &[1.0, 2.0, 3.0], &c, 1e-5).unwrap();
        assert!(r.max_rel_error <= 1e-10, "{}", r.max_rel_error);
    }

    #[test]
    fn doubled_gradient_gives_one_third() {
        let loss = |w: &[f64]| w.iter().map(|x| x * x).sum::<f64>();
        let p = [0.3, -0.7];
        let wrong: Vec<f64> = p.iter().map(|x| 4.0 * x).collect();
        let r = grad_check(loss, &p, &wrong, 1e-5).unwrap();
        assert!((r.max_rel_error - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn nondeterministic_loss_is_detected() {
        let n = Cell::new(0.0);
        let loss = |_: &[f64]| {
            n.set(n.get() + 1.0);
            n.get()
        };
        assert!(grad_check(loss, &[0.0], &[0.0], 1e-5).is_err());
    }

    #[test]
    fn rejects_bad_step() {
        assert!(grad_check(|_| 0.0, &[0.0], &[0.0], 0.0).is_err());
    }
}
