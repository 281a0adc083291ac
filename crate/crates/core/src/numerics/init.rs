use rand::Rng;

use super::matrix::Matrix;

/// Fills `m` from `uniform(−1/√fan_in, 1/√fan_in)` where `fan_in` is the
/// column count. Bias tensors (names ending in `.b_ih` / `.b_hh`) are zeroed.
pub fn uniform_init<R: Rng + ?Sized>(name: &str, m: &mut Matrix, rng: &mut R) {
    if is_bias(name) {
        m.fill(0.0);
        return;
    }
    let bound = 1.0 / libm::sqrt(m.cols().max(1) as f64);
    for v in m.as_mut_slice() {
        *v = rng.random_range(-bound..=bound);
    }
}

pub fn is_bias(name: &str) -> bool {
    name.ends_with(".b_ih") || name.ends_with(".b_hh")
}
