//! Polynomial stand-in for `1/sqrt(var)` inside private LayerNorm.
//!
//! The coefficients are public and fixed per round budget: a cubic for the
//! 3-round norm, an affine map for the 2-round tail norm. The cubic minimises
//! the worst relative error over `[NORM_BAND_LO, NORM_BAND_HI]` subject to the
//! normalised scale `sqrt(v) p(v)` staying in `[0.1, 2]` for every `v` in
//! `[GUARD_LO, GUARD_HI]`, so rows with unusual variance are damped rather
//! than amplified. The affine map is the unconstrained minimax fit over the
//! band. Both were solved offline as linear programs; [`RsqrtPoly::fit`]
//! gives the unconstrained fit for any degree and band.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const NORM_BAND_LO: f64 = 0.5;
pub const NORM_BAND_HI: f64 = 2.0;
pub const GUARD_LO: f64 = 0.02;
pub const GUARD_HI: f64 = 12.0;

const CUBIC: [f64; 4] = [
    1.6623721558223439,
    -0.7239408571268139,
    0.12550300482233132,
    -0.00637653185836621,
];
const AFFINE: [f64; 2] = [1.5080979315310745, -0.4308851232945927];

const GRID: usize = 801;
const LAWSON_STEPS: usize = 400;

#[derive(Clone, Debug, PartialEq)]
pub struct RsqrtPoly {
    coeffs: Vec<f64>,
    lo: f64,
    hi: f64,
}

fn grid(lo: f64, hi: f64) -> impl Iterator<Item = f64> {
    (0..GRID).map(move |i| lo + (hi - lo) * i as f64 / (GRID - 1) as f64)
}

impl RsqrtPoly {
    pub fn new(coeffs: Vec<f64>, lo: f64, hi: f64) -> Self {
        RsqrtPoly { coeffs, lo, hi }
    }

    /// Minimax-relative-error fit of the given degree over `[lo, hi]`.
    pub fn fit(degree: usize, lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::InvalidConfig(format!("bad fitting band [{lo}, {hi}]")));
        }
        let xs: Vec<f64> = grid(lo, hi).collect();
        // relative error of p against v^-1/2 is sqrt(v) p(v) - 1
        let design = DMatrix::from_fn(GRID, degree + 1, |i, j| xs[i].sqrt() * xs[i].powi(j as i32));
        let target = DVector::from_element(GRID, 1.0);
        let mut w = DVector::from_element(GRID, 1.0 / GRID as f64);
        let mut coeffs = DVector::zeros(degree + 1);
        for _ in 0..LAWSON_STEPS {
            let sw = w.map(f64::sqrt);
            let a = DMatrix::from_fn(GRID, degree + 1, |i, j| design[(i, j)] * sw[i]);
            let b = target.component_mul(&sw);
            coeffs = a
                .svd(true, true)
                .solve(&b, 1e-14)
                .map_err(|e| Error::InvalidConfig(format!("rsqrt fit failed: {e}")))?;
            let err = &design * &coeffs - &target;
            w = w.component_mul(&err.map(f64::abs));
            let total = w.sum();
            if total <= 0.0 {
                break;
            }
            w /= total;
        }
        Ok(RsqrtPoly {
            coeffs: coeffs.iter().copied().collect(),
            lo,
            hi,
        })
    }

    /// Cubic used by the 3-round LayerNorm.
    pub fn cubic() -> &'static RsqrtPoly {
        static POLY: OnceLock<RsqrtPoly> = OnceLock::new();
        POLY.get_or_init(|| RsqrtPoly::new(CUBIC.to_vec(), NORM_BAND_LO, NORM_BAND_HI))
    }

    /// Affine map used by the 2-round LayerNorm.
    pub fn affine() -> &'static RsqrtPoly {
        static POLY: OnceLock<RsqrtPoly> = OnceLock::new();
        POLY.get_or_init(|| RsqrtPoly::new(AFFINE.to_vec(), NORM_BAND_LO, NORM_BAND_HI))
    }

    pub fn for_budget(rounds: u32) -> Result<&'static RsqrtPoly> {
        match rounds {
            3 => Ok(Self::cubic()),
            2 => Ok(Self::affine()),
            _ => Err(Error::InvalidConfig(format!("LayerNorm supports 2 or 3 rounds, got {rounds}"))),
        }
    }

    /// Coefficients, constant term first.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn band(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn eval(&self, v: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * v + c)
    }

    /// Range of `sqrt(v) p(v)` over `[lo, hi]`: the per-row scale the norm applies
    /// relative to an exact LayerNorm.
    pub fn scale_range(&self, lo: f64, hi: f64) -> (f64, f64) {
        grid(lo, hi)
            .map(|v| self.eval(v) * v.sqrt())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| (a.min(s), b.max(s)))
    }

    /// Worst relative error against `1/sqrt(v)` on a dense grid over `[lo, hi]`.
    pub fn max_rel_error(&self, lo: f64, hi: f64) -> f64 {
        grid(lo, hi)
            .map(|v| (self.eval(v) * v.sqrt() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_accuracy() {
        let c = RsqrtPoly::cubic();
        assert_eq!(c.coeffs().len(), 4);
        let e = c.max_rel_error(NORM_BAND_LO, NORM_BAND_HI);
        assert!(e < 0.06, "{e}");
        let a = RsqrtPoly::affine();
        let e = a.max_rel_error(NORM_BAND_LO, NORM_BAND_HI);
        assert!(e < 0.087, "{e}");
    }

    #[test]
    fn cubic_is_damped_over_the_guard_range() {
        let (lo, hi) = RsqrtPoly::cubic().scale_range(GUARD_LO, GUARD_HI);
        assert!(lo >= 0.1 - 1e-6 && hi <= 2.0 + 1e-6, "{lo} {hi}");
    }

    #[test]
    fn unconstrained_fit_matches_pinned_affine() {
        let fitted = RsqrtPoly::fit(1, NORM_BAND_LO, NORM_BAND_HI).unwrap();
        for (a, b) in fitted.coeffs().iter().zip(RsqrtPoly::affine().coeffs()) {
            assert!((a - b).abs() < 1e-3, "{a} {b}");
        }
    }

    #[test]
    fn wide_band_is_out_of_reach() {
        // no polynomial of these degrees gets near 5% (cubic) or 15% (affine)
        // relative error over [0.1, 10]
        let c = RsqrtPoly::fit(3, 0.1, 10.0).unwrap();
        assert!(c.max_rel_error(0.1, 10.0) > 0.3);
        let a = RsqrtPoly::fit(1, 0.1, 10.0).unwrap();
        assert!(a.max_rel_error(0.1, 10.0) > 0.5);
    }

    #[test]
    fn budget_lookup() {
        assert_eq!(RsqrtPoly::for_budget(3).unwrap(), RsqrtPoly::cubic());
        assert!(RsqrtPoly::for_budget(4).is_err());
    }
}
