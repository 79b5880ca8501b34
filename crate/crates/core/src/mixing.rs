//! β, ρ and φ mixing coefficients of discretized chains.
//!
//! For an m×m doubly stochastic kernel `P` the chain lives on cells of
//! width `1/m` with uniform stationary law, so the suprema over Borel sets
//! reduce to positive-part sums and the ρ operator norm to the largest
//! singular value of the centered matrix `P - J/m`.

use std::fmt;
use std::io::Write;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::copula::{CopulaSpec, UnitSquarePoint};
use crate::error::{Error, Result};
use crate::format::fmt_sig;
use crate::grid::{discretize, fold, TransitionMatrix};

/// Above this resolution ρ switches from a full SVD to power iteration.
pub const SVD_MAX_RESOLUTION: usize = 512;
pub const POWER_REL_TOL: f64 = 1e-10;
pub const POWER_MAX_ITER: usize = 100_000;
/// Profile values at or below this are treated as zero by the rate fit.
pub const RATE_FLOOR: f64 = 1e-13;
pub const MAX_PROFILE_LAGS: usize = 64;
/// Density floors below this make the Doeblin bound not applicable.
pub const DOEBLIN_MIN_FLOOR: f64 = 1e-9;

/// `β = (1/m) Σ_i Σ_j (P_ij - 1/m)⁺`.
pub fn beta_coeff(p: &TransitionMatrix) -> f64 {
    let m = p.m() as f64;
    let total: f64 = row_excess(p).iter().sum();
    (total / m).clamp(0.0, 1.0)
}

/// `φ = max_i Σ_j (P_ij - 1/m)⁺`.
pub fn phi_coeff(p: &TransitionMatrix) -> f64 {
    row_excess(p).into_iter().fold(0.0, f64::max).clamp(0.0, 1.0)
}

/// `Σ_j (P_ij - 1/m)⁺` for every row `i`.
fn row_excess(p: &TransitionMatrix) -> Vec<f64> {
    let u = 1.0 / p.m() as f64;
    p.entries()
        .row_iter()
        .map(|row| row.iter().map(|&x| (x - u).max(0.0)).sum())
        .collect()
}

/// Operator norm of the transition on mean-zero functions: the largest
/// singular value of `P - J/m`.
pub fn rho_coeff(p: &TransitionMatrix) -> Result<f64> {
    if p.m() <= SVD_MAX_RESOLUTION {
        Ok(rho_svd(p))
    } else {
        rho_power_iteration(p, POWER_REL_TOL, POWER_MAX_ITER)
    }
}

/// Full singular value decomposition route, any resolution.
pub fn rho_svd(p: &TransitionMatrix) -> f64 {
    let m = p.m();
    let centered = p.entries().map(|x| x - 1.0 / m as f64);
    centered.singular_values().max().clamp(0.0, 1.0)
}

/// Power iteration on `QᵀQ` with `Q = P - J/m`, any resolution. Stops when
/// the relative change of the singular value estimate is at most `rel_tol`.
pub fn rho_power_iteration(p: &TransitionMatrix, rel_tol: f64, max_iter: usize) -> Result<f64> {
    let m = p.m();
    let e = p.entries();
    let et = e.transpose();
    let center = |x: &mut DVector<f64>| {
        let mean = x.mean();
        x.add_scalar_mut(-mean);
    };
    // Fixed start, generic enough not to be orthogonal to any singular vector.
    let mut x = DVector::from_fn(m, |i, _| ((i as f64 + 0.5) * 0.618_033_988_749_895).fract() - 0.5 + 1e-3 * (i as f64).sin());
    center(&mut x);
    let norm = x.norm();
    if norm == 0.0 {
        return Ok(0.0);
    }
    x /= norm;
    let mut sigma = f64::NAN;
    for _ in 0..max_iter {
        let mut y = e * &x;
        center(&mut y);
        let next = y.norm();
        let mut z = &et * &y;
        center(&mut z);
        let zn = z.norm();
        if next == 0.0 || zn == 0.0 {
            return Ok(0.0);
        }
        if (next - sigma).abs() <= rel_tol * next {
            return Ok(next.clamp(0.0, 1.0));
        }
        sigma = next;
        x = z / zn;
    }
    Err(Error::NoConvergence {
        context: format!("power iteration for rho of {}", p.provenance().spec_id),
        bracket_width: f64::NAN,
        step: Some(max_iter),
    })
}

/// The three coefficients, used as labels in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Coefficient {
    Beta,
    Rho,
    Phi,
}

impl fmt::Display for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Coefficient::Beta => "beta",
            Coefficient::Rho => "rho",
            Coefficient::Phi => "phi",
        })
    }
}

/// Fitted geometric rates; `None` where fewer than two lags exceed
/// [`RATE_FLOOR`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FittedRates {
    pub beta: Option<f64>,
    pub rho: Option<f64>,
    pub phi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingProfile {
    pub spec_id: String,
    pub m: usize,
    pub lags: Vec<usize>,
    pub beta: Vec<f64>,
    pub rho: Vec<f64>,
    pub phi: Vec<f64>,
    pub fitted_rates: FittedRates,
    /// Coefficients whose fitted envelope does not decrease.
    pub non_decreasing: Vec<Coefficient>,
}

/// Slack for `β_n <= φ_n`.
pub const BETA_PHI_TOL: f64 = 1e-12;
/// Slack for `ρ_n <= ρ₁ⁿ` and `ρ_n <= 2√φ_n`.
pub const RHO_TOL: f64 = 1e-9;

/// Outcome of the per-lag inequality checks of a profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct InequalityChecks {
    pub beta_le_phi: bool,
    pub rho_submultiplicative: bool,
    pub rho_le_two_sqrt_phi: bool,
}

impl InequalityChecks {
    pub fn all(&self) -> bool {
        self.beta_le_phi && self.rho_submultiplicative && self.rho_le_two_sqrt_phi
    }
}

impl MixingProfile {
    /// `ρ₁ⁿ` for every lag.
    pub fn rho1_pow(&self) -> Vec<f64> {
        let rho1 = self.rho[0];
        self.lags.iter().map(|&n| rho1.powi(n as i32)).collect()
    }

    pub fn check_inequalities(&self) -> InequalityChecks {
        let envelope = self.rho1_pow();
        let per_lag = |f: &dyn Fn(usize) -> bool| (0..self.lags.len()).all(f);
        InequalityChecks {
            beta_le_phi: per_lag(&|k| self.beta[k] <= self.phi[k] + BETA_PHI_TOL),
            rho_submultiplicative: per_lag(&|k| self.rho[k] <= envelope[k] + RHO_TOL),
            rho_le_two_sqrt_phi: per_lag(&|k| self.rho[k] <= 2.0 * self.phi[k].sqrt() + RHO_TOL),
        }
    }

    /// CSV with header `lag,beta,rho,phi,rho1_pow`, 15 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "lag,beta,rho,phi,rho1_pow")?;
        for (k, envelope) in self.rho1_pow().into_iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{}",
                self.lags[k],
                fmt_sig(self.beta[k], 15),
                fmt_sig(self.rho[k], 15),
                fmt_sig(self.phi[k], 15),
                fmt_sig(envelope, 15)
            )?;
        }
        Ok(())
    }
}

/// Profile of `discretize(spec, m)` at lags `1..=n_max`.
pub fn mixing_profile(spec: &CopulaSpec, m: usize, n_max: usize) -> Result<MixingProfile> {
    profile_of(&discretize(spec, m)?, n_max)
}

/// Profile of an existing kernel. Powers are built by sequential
/// multiplication so every lag is an exact product.
pub fn profile_of(p: &TransitionMatrix, n_max: usize) -> Result<MixingProfile> {
    if n_max == 0 || n_max > MAX_PROFILE_LAGS {
        return Err(Error::InvalidArgument(format!(
            "n_max = {n_max} must lie in 1..={MAX_PROFILE_LAGS}"
        )));
    }
    let mut powers = Vec::with_capacity(n_max);
    powers.push(p.clone());
    for _ in 1..n_max {
        let next = fold(powers.last().expect("nonempty"), p)?;
        powers.push(next);
    }
    let coeffs: Vec<(f64, f64, f64)> = powers
        .par_iter()
        .map(|q| Ok((beta_coeff(q), rho_coeff(q)?, phi_coeff(q))))
        .collect::<Result<_>>()?;
    let lags: Vec<usize> = (1..=n_max).collect();
    let beta: Vec<f64> = coeffs.iter().map(|c| c.0).collect();
    let rho: Vec<f64> = coeffs.iter().map(|c| c.1).collect();
    let phi: Vec<f64> = coeffs.iter().map(|c| c.2).collect();
    let x: Vec<f64> = lags.iter().map(|&n| n as f64).collect();
    let mut non_decreasing = Vec::new();
    let mut fit = |values: &[f64], which: Coefficient| {
        let raw = fit_log_slope(values, &x).map(f64::exp);
        if raw.is_some_and(|r| r >= 1.0) {
            non_decreasing.push(which);
        }
        raw.map(|r| r.clamp(0.0, 1.0))
    };
    let fitted_rates = FittedRates {
        beta: fit(&beta, Coefficient::Beta),
        rho: fit(&rho, Coefficient::Rho),
        phi: fit(&phi, Coefficient::Phi),
    };
    Ok(MixingProfile {
        spec_id: p.provenance().spec_id.clone(),
        m: p.m(),
        lags,
        beta,
        rho,
        phi,
        fitted_rates,
        non_decreasing,
    })
}

/// Geometric rate `exp(slope)` of the least-squares fit of `ln value`
/// against lag, clamped to `[0, 1]`. `None` when fewer than two values
/// exceed [`RATE_FLOOR`].
///
/// # Panics
/// If the slices differ in length.
pub fn geometric_rate(values: &[f64], lags: &[f64]) -> Option<f64> {
    fit_log_slope(values, lags).map(|s| s.exp().clamp(0.0, 1.0))
}

fn fit_log_slope(values: &[f64], lags: &[f64]) -> Option<f64> {
    assert_eq!(values.len(), lags.len(), "values and lags differ in length");
    let pts: Vec<(f64, f64)> = lags
        .iter()
        .zip(values)
        .filter(|(_, &v)| v > RATE_FLOOR)
        .map(|(&x, &v)| (x, v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoeblinReport {
    pub spec_id: String,
    pub m: usize,
    /// Side of the midpoint grid the density floor was taken over.
    pub floor_grid: usize,
    pub density_floor: f64,
    pub epsilon: f64,
    pub phi_bound: f64,
    pub grid_phi1: f64,
    pub applicable: bool,
}

impl DoeblinReport {
    /// `grid_phi1 <= phi_bound + 1e-9`; `None` when not applicable.
    pub fn bound_holds(&self) -> Option<bool> {
        self.applicable.then_some(self.grid_phi1 <= self.phi_bound + RHO_TOL)
    }
}

/// Density floor `c` over the `(2m)²` cell-midpoint grid, `ε = c/(1+c)`,
/// and the φ₁ of `discretize(spec, m)` it should bound.
///
/// `c` is clamped to `[0, 1]`: a copula density cannot exceed 1 everywhere.
pub fn doeblin_report(spec: &CopulaSpec, m: usize) -> Result<DoeblinReport> {
    let p = discretize(spec, m)?;
    let k = 2 * m;
    let mid = |a: usize| (a as f64 + 0.5) / k as f64;
    let floor = (0..k)
        .into_par_iter()
        .map(|i| {
            let mut low = f64::INFINITY;
            for j in 0..k {
                let pt = UnitSquarePoint { u: mid(i), v: mid(j) };
                low = low.min(spec.density(pt)?.value);
            }
            Ok(low)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let c = floor.clamp(0.0, 1.0);
    let epsilon = c / (1.0 + c);
    Ok(DoeblinReport {
        spec_id: spec.id().to_string(),
        m,
        floor_grid: k,
        density_floor: c,
        epsilon,
        phi_bound: 1.0 - epsilon,
        grid_phi1: phi_coeff(&p),
        applicable: c >= DOEBLIN_MIN_FLOOR,
    })
}

/// Convex-combination bound `Σ w_k ρ(P_k)` for the components of a mixture
/// spec discretized at resolution `m`, alongside `ρ` of the mixture itself.
pub fn mixture_rho_bound(spec: &CopulaSpec, m: usize) -> Result<Option<(f64, f64)>> {
    let crate::copula::Family::Mixture { components, weights } = spec.family() else {
        return Ok(None);
    };
    let mut bound = 0.0;
    for (c, w) in components.iter().zip(weights) {
        bound += w * rho_coeff(&discretize(c, m)?)?;
    }
    let mixed = rho_coeff(&discretize(spec, m)?)?;
    Ok(Some((mixed, bound)))
}
