//! Error metrics.

use num_complex::Complex64;

use crate::error::shape;
use crate::{Error, Result};

/// `||h_hat - h||^2 / ||h||^2`.
pub fn nmse(estimate: &[Complex64], truth: &[Complex64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(shape(alloc::format!("{}", truth.len()), alloc::format!("{}", estimate.len())));
    }
    let energy: f64 = truth.iter().map(Complex64::norm_sqr).sum();
    if !(energy > 0.0) {
        return Err(Error::ZeroChannel);
    }
    let err: f64 = estimate.iter().zip(truth).map(|(a, b)| (a - b).norm_sqr()).sum();
    Ok(err / energy)
}

/// `10 log10(x)`.
pub fn to_db(x: f64) -> f64 {
    10.0 * libm::log10(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn nmse_reference_points() {
        let h: Vec<_> = (0..5).map(|k| Complex64::new(k as f64, 1.0)).collect();
        assert_eq!(nmse(&h, &h).unwrap(), 0.0);
        let zero = alloc::vec![Complex64::new(0.0, 0.0); 5];
        assert_eq!(nmse(&zero, &h).unwrap(), 1.0);
        let double: Vec<_> = h.iter().map(|z| z * 2.0).collect();
        assert_eq!(nmse(&double, &h).unwrap(), 1.0);
        assert_eq!(nmse(&h, &zero).unwrap_err(), Error::ZeroChannel);
    }
}
