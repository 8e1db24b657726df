use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use super::{Affine, Arch, CostCoefficients, ProfileSample};
use crate::error::{Error, Result};

const MIN_SAMPLES: usize = 5;

/// Ordinary least squares on the regressors `(h s, r s, s, 1)`, separately
/// for communication and computation time.
pub fn fit_cost_model(samples: &[ProfileSample], env: &str) -> Result<CostCoefficients> {
    check_design(samples)?;
    let n = samples.len();
    let x = DMatrix::from_fn(n, 4, |i, j| {
        let a = samples[i].arch();
        let s = a.s as f64;
        match j {
            0 => a.h as f64 * s,
            1 => a.r as f64 * s,
            2 => s,
            _ => 1.0,
        }
    });
    let (comm, r2_comm) = ols(&x, samples.iter().map(|p| p.comm_time_s))?;
    let (comp, r2_comp) = ols(&x, samples.iter().map(|p| p.comp_time_s))?;
    Ok(CostCoefficients {
        env: env.to_owned(),
        comm,
        comp,
        r2_comm: Some(r2_comm),
        r2_comp: Some(r2_comp),
    })
}

fn check_design(samples: &[ProfileSample]) -> Result<()> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::UnderDetermined(format!(
            "need at least {MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    let distinct = |f: fn(&Arch) -> usize| samples.iter().map(|p| f(&p.arch())).collect::<BTreeSet<_>>().len();
    let missing: Vec<&str> = [("h", distinct(|a| a.h)), ("r", distinct(|a| a.r)), ("s", distinct(|a| a.s))]
        .into_iter()
        .filter(|(_, k)| *k < 2)
        .map(|(name, _)| name)
        .collect();
    if !missing.is_empty() {
        return Err(Error::UnderDetermined(format!(
            "samples do not vary in {}",
            missing.join(", ")
        )));
    }
    Ok(())
}

fn ols(x: &DMatrix<f64>, y: impl Iterator<Item = f64>) -> Result<(Affine, f64)> {
    let y = DVector::from_iterator(x.nrows(), y);
    let svd = x.clone().svd(true, true);
    let tol = 1e-10 * svd.singular_values.max();
    if svd.rank(tol) < x.ncols() {
        return Err(Error::UnderDetermined("design matrix is rank deficient".into()));
    }
    let beta = svd.solve(&y, tol).map_err(|e| Error::UnderDetermined(e.into()))?;
    let resid = &y - x * &beta;
    let mean = y.mean();
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res = resid.norm_squared();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok((Affine([beta[0], beta[1], beta[2], beta[3]]), r2))
}

/// Samples whose times follow `truth` exactly, times `1 + e` with
/// `e ~ N(0, noise)`. Rounds and bytes are left at zero.
pub fn synthesize_samples(truth: &CostCoefficients, grid: &[Arch], noise: f64, seed: u64) -> Vec<ProfileSample> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise.max(0.0)).expect("finite noise");
    grid.iter()
        .map(|&a| {
            let mut jitter = || 1.0 + normal.sample(&mut rng);
            ProfileSample {
                h: a.h,
                r: a.r,
                s: a.s,
                comm_time_s: truth.comm.eval(a) * jitter(),
                comp_time_s: truth.comp.eval(a) * jitter(),
                rounds: 0,
                bytes: 0,
            }
        })
        .collect()
}
