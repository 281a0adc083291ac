use alloc::vec::Vec;

#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

#[inline]
pub fn tanh_scalar(x: f64) -> f64 {
    libm::tanh(x)
}

pub fn sigmoid(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| sigmoid_scalar(v)).collect()
}

pub fn tanh(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| tanh_scalar(v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fixed_points() {
        assert_eq!(sigmoid_scalar(0.0), 0.5);
        assert_eq!(tanh_scalar(0.0), 0.0);
        assert_eq!(sigmoid(&[0.0, 0.0]), [0.5, 0.5]);
    }

    #[test]
    fn saturates_without_nan() {
        assert!(sigmoid_scalar(1e4) <= 1.0);
        assert!(sigmoid_scalar(-1e4) >= 0.0);
        assert!(!sigmoid_scalar(-800.0).is_nan());
    }

    proptest! {
        #[test]
        fn sigmoid_symmetry(x in -30.0f64..30.0) {
            prop_assert!((sigmoid_scalar(-x) - (1.0 - sigmoid_scalar(x))).abs() < 1e-12);
        }

        #[test]
        fn ranges(x in -15.0f64..15.0) {
            let s = sigmoid_scalar(x);
            let t = tanh_scalar(x);
            prop_assert!(s > 0.0 && s < 1.0);
            prop_assert!(t > -1.0 && t < 1.0);
        }
    }
}
