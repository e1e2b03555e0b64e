use std::ops::Range;

/// Denominator floor for the relative error, so entries that are zero on
/// both sides compare by absolute difference.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct BlockReport {
    pub name: String,
    pub max_relative_error: f64,
    pub worst_index: usize,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockReport>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| b.passed)
    }

    pub fn max_relative_error(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.max_relative_error)
            .fold(0.0, f64::max)
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Compares `analytic` against central differences of `loss` around `params`.
/// Each block names a contiguous parameter range and is judged separately.
pub fn finite_diff_check<F>(
    mut loss: F,
    params: &[f64],
    analytic: &[f64],
    blocks: &[(String, Range<usize>)],
    h: f64,
    tol: f64,
) -> GradCheckReport
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len(), "gradient length mismatch");
    let mut p = params.to_vec();
    let blocks = blocks
        .iter()
        .map(|(name, range)| {
            let mut worst = 0.0;
            let mut worst_index = range.start;
            for i in range.clone() {
                let orig = p[i];
                p[i] = orig + h;
                let plus = loss(&p);
                p[i] = orig - h;
                let minus = loss(&p);
                p[i] = orig;
                let numeric = (plus - minus) / (2.0 * h);
                let err = relative_error(analytic[i], numeric);
                // NaN must not slip through as "not greater"
                if err > worst || err.is_nan() {
                    worst = if err.is_nan() { f64::INFINITY } else { err };
                    worst_index = i;
                }
            }
            BlockReport {
                name: name.clone(),
                max_relative_error: worst,
                worst_index,
                passed: worst <= tol,
            }
        })
        .collect();
    GradCheckReport {
        blocks,
        tolerance: tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(p: &[f64]) -> f64 {
        p.iter().enumerate().map(|(i, x)| (i as f64 + 1.0) * x * x).sum()
    }

    fn quadratic_grad(p: &[f64]) -> Vec<f64> {
        p.iter()
            .enumerate()
            .map(|(i, x)| 2.0 * (i as f64 + 1.0) * x)
            .collect()
    }

    #[test]
    fn exact_gradient_passes() {
        let p = [0.3, -1.2, 2.5];
        let r = finite_diff_check(
            quadratic,
            &p,
            &quadratic_grad(&p),
            &[("q".into(), 0..3)],
            1e-4,
            1e-6,
        );
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn doubled_gradient_fails() {
        let p = [0.3, -1.2, 2.5];
        let g: Vec<f64> = quadratic_grad(&p).iter().map(|v| 2.0 * v).collect();
        let r = finite_diff_check(quadratic, &p, &g, &[("q".into(), 0..3)], 1e-4, 1e-6);
        assert!(!r.passed());
        assert!(r.max_relative_error() > 0.4);
    }
}
