use alloc::string::String;
use alloc::vec::Vec;

use super::matrix::Matrix;

/// Relative errors below this denominator are measured against it instead,
/// so entries that are numerically zero on both sides do not blow up.
pub const DEFAULT_ABS_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub max_abs_analytic: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.tensors.iter().all(|t| t.max_rel_error < self.tolerance)
    }
}

/// Compares `analytic` gradients with central differences of `loss` at step
/// `h`. `params` is perturbed in place and restored before returning.
pub fn grad_check<F>(names: &[String], params: &mut [Matrix], analytic: &[Matrix], mut loss: F, h: f64, tol: f64) -> GradCheckReport
where
    F: FnMut(&[Matrix]) -> f64,
{
    let mut tensors = Vec::with_capacity(params.len());
    for t in 0..params.len() {
        let mut worst: f64 = 0.0;
        let mut biggest: f64 = 0.0;
        for k in 0..params[t].len() {
            let orig = params[t].as_slice()[k];
            params[t].as_mut_slice()[k] = orig + h;
            let up = loss(params);
            params[t].as_mut_slice()[k] = orig - h;
            let down = loss(params);
            params[t].as_mut_slice()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[t].as_slice()[k];
            let denom = a.abs().max(numeric.abs()).max(DEFAULT_ABS_FLOOR);
            worst = worst.max((a - numeric).abs() / denom);
            biggest = biggest.max(a.abs());
        }
        tensors.push(TensorCheck {
            name: names.get(t).cloned().unwrap_or_default(),
            max_rel_error: worst,
            max_abs_analytic: biggest,
        });
    }
    GradCheckReport { tensors, tolerance: tol }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn quadratic(ps: &[Matrix]) -> f64 {
        ps.iter()
            .flat_map(|m| m.as_slice().iter().enumerate())
            .map(|(i, w)| (i as f64 + 1.0) * w * w)
            .sum()
    }

    fn setup() -> (Vec<String>, Vec<Matrix>, Vec<Matrix>) {
        let p = vec![
            Matrix::from_vec(2, 2, vec![0.3, -1.2, 2.0, 0.7]).unwrap(),
            Matrix::from_vec(3, 1, vec![-0.4, 0.9, 1.5]).unwrap(),
        ];
        let g = p
            .iter()
            .map(|m| {
                let d = m.as_slice().iter().enumerate().map(|(i, w)| 2.0 * (i as f64 + 1.0) * w).collect();
                Matrix::from_vec(m.rows(), m.cols(), d).unwrap()
            })
            .collect();
        (vec!["a".into(), "b".into()], p, g)
    }

    #[test]
    fn quadratic_agrees() {
        let (names, mut p, g) = setup();
        let before = p.clone();
        let r = grad_check(&names, &mut p, &g, quadratic, 1e-5, 1e-9);
        assert!(r.passed(), "{r:?}");
        assert!(r.max_rel_error() < 1e-9);
        assert_eq!(p, before);
    }

    #[test]
    fn corrupted_gradient_fails() {
        let (names, mut p, mut g) = setup();
        g[1].as_mut_slice()[2] *= 1.01;
        let r = grad_check(&names, &mut p, &g, quadratic, 1e-5, 1e-3);
        assert!(!r.passed());
        assert!(r.tensors[0].max_rel_error < 1e-9);
    }
}
