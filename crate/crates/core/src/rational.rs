//! Univariate polynomials and rational functions with real coefficients.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Coefficients in ascending order of degree.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        let get = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
        Self { coeffs: (0..n).map(|i| get(&self.coeffs, i) + get(&other.coeffs, i)).collect() }
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.coeffs.is_empty() || other.coeffs.is_empty() {
            return Self { coeffs: vec![] };
        }
        let mut out = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self { coeffs: out }
    }

    /// x^a (1-x)^b.
    pub fn bernstein_like(a: usize, b: usize) -> Self {
        let x = Self::new(vec![0.0, 1.0]);
        let one_minus = Self::new(vec![1.0, -1.0]);
        let mut out = Self::new(vec![1.0]);
        for _ in 0..a {
            out = out.mul(&x);
        }
        for _ in 0..b {
            out = out.mul(&one_minus);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RationalFunction {
    num: Polynomial,
    den: Polynomial,
}

impl RationalFunction {
    pub fn new(num: Polynomial, den: Polynomial) -> Self {
        Self { num, den }
    }

    pub fn numerator(&self) -> &Polynomial {
        &self.num
    }

    pub fn denominator(&self) -> &Polynomial {
        &self.den
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.num.eval(x) / self.den.eval(x)
    }

    /// Fits N/D with deg N <= `deg_num`, deg D <= `deg_den` and D(0) = 1
    /// through the first deg_num + deg_den + 1 samples, then checks the
    /// remaining samples agree within `tol` (absolute).
    pub fn interpolate(
        xs: &[f64],
        ys: &[f64],
        deg_num: usize,
        deg_den: usize,
        tol: f64,
    ) -> Result<Self> {
        let unknowns = deg_num + 1 + deg_den;
        if xs.len() != ys.len() || xs.len() < unknowns {
            return Err(Error::Calibration(format!(
                "{} samples for {unknowns} unknowns",
                xs.len().min(ys.len())
            )));
        }
        // N(x_i) - y_i (D(x_i) - 1) = y_i
        let a = DMatrix::from_fn(unknowns, unknowns, |i, j| {
            let (x, y) = (xs[i], ys[i]);
            if j <= deg_num {
                x.powi(j as i32)
            } else {
                -y * x.powi((j - deg_num) as i32)
            }
        });
        let b = DVector::from_iterator(unknowns, ys[..unknowns].iter().copied());
        let lu = a.lu();
        let sol = lu
            .solve(&b)
            .ok_or_else(|| Error::Calibration("singular interpolation system".into()))?;
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(Error::Calibration("interpolation produced non-finite coefficients".into()));
        }
        let num = Polynomial::new(sol.iter().take(deg_num + 1).copied().collect());
        let den = Polynomial::new(std::iter::once(1.0).chain(sol.iter().skip(deg_num + 1).copied()).collect());
        let r = Self { num, den };
        for (&x, &y) in xs.iter().zip(ys) {
            let e = (r.eval(x) - y).abs();
            if !(e <= tol) {
                return Err(Error::Calibration(format!(
                    "fit misses the sample at {x} by {e:e}; degree assumption is wrong"
                )));
            }
        }
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_arithmetic() {
        let p = Polynomial::new(vec![1.0, 2.0]);
        let q = Polynomial::new(vec![0.0, 0.0, 3.0]);
        assert_eq!(p.mul(&q).coeffs(), &[0.0, 0.0, 3.0, 6.0]);
        assert_eq!(p.add(&q).coeffs(), &[1.0, 2.0, 3.0]);
        assert_eq!(Polynomial::bernstein_like(1, 2).coeffs(), &[0.0, 1.0, -2.0, 1.0]);
        assert_eq!(p.eval(2.0), 5.0);
    }

    #[test]
    fn recovers_a_known_rational_function() {
        let f = |x: f64| (25.0 - 38.0 * x + 14.0 * x * x) / (25.0 - 40.0 * x + 20.0 * x * x);
        let xs: Vec<f64> = (0..9).map(|i| i as f64 / 8.0).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        let r = RationalFunction::interpolate(&xs, &ys, 2, 2, 1e-12).unwrap();
        for i in 0..50 {
            let x = i as f64 / 49.0;
            assert!((r.eval(x) - f(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn wrong_degree_is_reported() {
        let f = |x: f64| 1.0 / (1.0 + x * x * x);
        let xs: Vec<f64> = (0..8).map(|i| i as f64 / 7.0).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        assert!(matches!(
            RationalFunction::interpolate(&xs, &ys, 1, 1, 1e-9),
            Err(Error::Calibration(_))
        ));
    }
}
