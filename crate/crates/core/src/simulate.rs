//! Simulation of the stationary chain and empirical transition matrices.
//!
//! `U₀` is draw 0 of the uniform stream for the seed; `U_{k+1}` is the
//! conditional quantile of `U_k` at draw `k + 1`. Output values are
//! `F⁻¹(U_k)` for the chosen marginal `F`.

use std::fmt;
use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::copula::CopulaSpec;
use crate::error::{Error, Result};
use crate::format::fmt_sig;
use crate::grid::{Construction, TransitionMatrix};
use crate::rng::{UniformStream, GENERATOR_ID};

/// Tolerance passed to the conditional quantile at every step.
pub const STEP_TOL: f64 = 1e-12;
/// Weight sums of point-mass marginals must be within this of their target.
pub const MARGINAL_WEIGHT_TOL: f64 = 1e-12;
/// Asymptotic 1% critical value of `√n · D_n` for the one-sample KS test.
pub const KS_CRITICAL_1PCT: f64 = 1.6276;

/// Marginal law `F` of the simulated chain.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarginalSpec {
    #[default]
    Uniform01,
    /// Continuous CDF interpolating `(knots[k], cdf[k])` linearly; knots
    /// strictly increasing, cdf nondecreasing from 0 to 1.
    PiecewiseLinearCdf { knots: Vec<f64>, cdf: Vec<f64> },
    /// `F = Σ w_a 1{x >= a} + (1 - Σ w_a) G` with `G` piecewise linear as
    /// above. `knots`/`cdf` may be empty when the atom weights sum to 1.
    PointMassMixture {
        atoms: Vec<f64>,
        weights: Vec<f64>,
        #[serde(default)]
        knots: Vec<f64>,
        #[serde(default)]
        cdf: Vec<f64>,
    },
}

fn marginal_error(field: &str, reason: impl Into<String>) -> Error {
    Error::InvalidArgument(format!("marginal.{field}: {}", reason.into()))
}

fn check_piecewise(knots: &[f64], cdf: &[f64]) -> Result<()> {
    if knots.len() < 2 || knots.len() != cdf.len() {
        return Err(marginal_error("knots", "need at least two knots and one cdf value per knot"));
    }
    if knots.iter().chain(cdf).any(|x| !x.is_finite()) {
        return Err(marginal_error("knots", "values must be finite"));
    }
    if knots.windows(2).any(|w| w[1] <= w[0]) {
        return Err(marginal_error("knots", "must be strictly increasing"));
    }
    if cdf.windows(2).any(|w| w[1] < w[0]) {
        return Err(marginal_error("cdf", "must be nondecreasing"));
    }
    if cdf[0] != 0.0 || cdf[cdf.len() - 1] != 1.0 {
        return Err(marginal_error("cdf", "must start at 0 and end at 1"));
    }
    Ok(())
}

/// Linear interpolation of a validated piecewise-linear CDF.
fn piecewise_cdf(knots: &[f64], cdf: &[f64], x: f64) -> f64 {
    if x < knots[0] {
        return 0.0;
    }
    let last = knots.len() - 1;
    if x >= knots[last] {
        return 1.0;
    }
    let k = knots.partition_point(|&t| t <= x);
    let (x0, x1, c0, c1) = (knots[k - 1], knots[k], cdf[k - 1], cdf[k]);
    c0 + (c1 - c0) * (x - x0) / (x1 - x0)
}

/// `Σ w_a 1{counts(a)} + (1 - Σ w_a) G(x)`.
fn atom_mixture_cdf(
    atoms: &[f64],
    weights: &[f64],
    knots: &[f64],
    cdf: &[f64],
    counts: impl Fn(f64) -> bool,
    x: f64,
) -> f64 {
    let mut mass = 0.0;
    let mut value = 0.0;
    for (&a, &w) in atoms.iter().zip(weights) {
        mass += w;
        if counts(a) {
            value += w;
        }
    }
    if !knots.is_empty() {
        value += (1.0 - mass).max(0.0) * piecewise_cdf(knots, cdf, x);
    }
    value.min(1.0)
}

impl MarginalSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            MarginalSpec::Uniform01 => Ok(()),
            MarginalSpec::PiecewiseLinearCdf { knots, cdf } => check_piecewise(knots, cdf),
            MarginalSpec::PointMassMixture {
                atoms,
                weights,
                knots,
                cdf,
            } => {
                if atoms.is_empty() || atoms.len() != weights.len() {
                    return Err(marginal_error("atoms", "need at least one atom and one weight per atom"));
                }
                if atoms.iter().any(|a| !a.is_finite()) {
                    return Err(marginal_error("atoms", "values must be finite"));
                }
                if weights.iter().any(|w| w.is_nan() || *w < 0.0) {
                    return Err(marginal_error("weights", "must be nonnegative"));
                }
                let mass: f64 = weights.iter().sum();
                if mass > 1.0 + MARGINAL_WEIGHT_TOL {
                    return Err(marginal_error("weights", format!("sum {mass} exceeds 1")));
                }
                if knots.is_empty() && cdf.is_empty() {
                    if (mass - 1.0).abs() > MARGINAL_WEIGHT_TOL {
                        return Err(marginal_error(
                            "weights",
                            format!("sum {mass} must be 1 without a continuous part"),
                        ));
                    }
                    Ok(())
                } else {
                    check_piecewise(knots, cdf)
                }
            }
        }
    }

    /// `F(x)`, right-continuous.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            MarginalSpec::Uniform01 => x.clamp(0.0, 1.0),
            MarginalSpec::PiecewiseLinearCdf { knots, cdf } => piecewise_cdf(knots, cdf, x),
            MarginalSpec::PointMassMixture {
                atoms,
                weights,
                knots,
                cdf,
            } => atom_mixture_cdf(atoms, weights, knots, cdf, |a| x >= a, x),
        }
    }

    /// Left limit `F(x-)`.
    fn cdf_left(&self, x: f64) -> f64 {
        match self {
            MarginalSpec::PointMassMixture {
                atoms,
                weights,
                knots,
                cdf,
            } => atom_mixture_cdf(atoms, weights, knots, cdf, |a| x > a, x),
            _ => self.cdf(x),
        }
    }

    /// Sorted points where `F` changes slope or jumps.
    fn breakpoints(&self) -> Vec<f64> {
        match self {
            MarginalSpec::Uniform01 => vec![0.0, 1.0],
            MarginalSpec::PiecewiseLinearCdf { knots, .. } => knots.clone(),
            MarginalSpec::PointMassMixture { atoms, knots, .. } => {
                let mut b: Vec<f64> = atoms.iter().chain(knots).copied().collect();
                b.sort_by(f64::total_cmp);
                b.dedup();
                b
            }
        }
    }

    /// Stable identifier used in path metadata.
    pub fn id(&self) -> String {
        let list = |xs: &[f64]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        match self {
            MarginalSpec::Uniform01 => "uniform01".into(),
            MarginalSpec::PiecewiseLinearCdf { knots, cdf } => {
                format!("piecewise_linear_cdf(knots=[{}];cdf=[{}])", list(knots), list(cdf))
            }
            MarginalSpec::PointMassMixture {
                atoms,
                weights,
                knots,
                cdf,
            } => format!(
                "point_mass_mixture(atoms=[{}];weights=[{}];knots=[{}];cdf=[{}])",
                list(atoms),
                list(weights),
                list(knots),
                list(cdf)
            ),
        }
    }
}

impl fmt::Display for MarginalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

/// `F⁻¹(u) = inf{x : F(x) >= u}`: the left endpoint of a flat stretch and
/// the location of a jump. `u <= 0` maps to the leftmost breakpoint.
///
/// # Panics
/// If `u` is NaN.
pub fn generalized_inverse(marginal: &MarginalSpec, u: f64) -> f64 {
    assert!(!u.is_nan(), "generalized inverse at NaN");
    if let MarginalSpec::Uniform01 = marginal {
        return u.clamp(0.0, 1.0);
    }
    let points = marginal.breakpoints();
    if u <= 0.0 {
        return points[0];
    }
    let u = u.min(1.0);
    let mut prev = points[0];
    let mut prev_value = marginal.cdf(prev);
    if prev_value >= u {
        return prev;
    }
    for &b in &points[1..] {
        let left = marginal.cdf_left(b);
        if left >= u {
            // F is linear on [prev, b) and crosses u there.
            let x = prev + (u - prev_value) / (left - prev_value) * (b - prev);
            return x.clamp(prev, b);
        }
        let value = marginal.cdf(b);
        if value >= u {
            return b;
        }
        prev = b;
        prev_value = value;
    }
    prev
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainPath {
    pub values: Vec<f64>,
    pub seed: u64,
    pub spec_id: String,
    pub marginal: MarginalSpec,
    pub generator_id: String,
}

impl ChainPath {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// CSV with `#` metadata lines, then `index,value` rows with 17
    /// significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# spec={}", self.spec_id)?;
        writeln!(out, "# marginal={}", self.marginal.id())?;
        writeln!(out, "# seed={}", self.seed)?;
        writeln!(out, "# generator={}", self.generator_id)?;
        writeln!(out, "index,value")?;
        for (k, x) in self.values.iter().enumerate() {
            writeln!(out, "{k},{}", fmt_sig(*x, 17))?;
        }
        Ok(())
    }
}

/// States are kept inside `(0, 1)` so the next conditional law is defined.
fn interior(u: f64) -> f64 {
    u.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Simulates `n` states of the chain with copula `spec` and marginal
/// `marginal`; deterministic in `seed`.
pub fn sample_chain(spec: &CopulaSpec, marginal: &MarginalSpec, n: usize, seed: u64) -> Result<ChainPath> {
    if n == 0 {
        return Err(Error::InvalidArgument("path length n must be at least 1".into()));
    }
    marginal.validate()?;
    let mut stream = UniformStream::new(seed);
    let mut u = interior(stream.next_uniform());
    let mut values = Vec::with_capacity(n);
    values.push(generalized_inverse(marginal, u));
    for k in 1..n {
        let innovation = stream.next_uniform();
        u = match spec.inverse_conditional(u, innovation, STEP_TOL) {
            Ok(v) => interior(v),
            Err(Error::NoConvergence {
                context,
                bracket_width,
                ..
            }) => {
                return Err(Error::NoConvergence {
                    context,
                    bracket_width,
                    step: Some(k),
                })
            }
            Err(e) => return Err(e),
        };
        values.push(generalized_inverse(marginal, u));
    }
    Ok(ChainPath {
        values,
        seed,
        spec_id: spec.id().to_string(),
        marginal: marginal.clone(),
        generator_id: GENERATOR_ID.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalTransition {
    /// Row-stochastic; column sums are only approximately 1.
    pub matrix: TransitionMatrix,
    /// Rows without visits, filled with the uniform row.
    pub empty_rows: Vec<usize>,
}

/// Cell `i` covers `(i/m, (i+1)/m]`.
fn cell_of(u: f64, m: usize) -> usize {
    ((u * m as f64).ceil() as usize).saturating_sub(1).min(m - 1)
}

/// Row-normalized counts of consecutive cell pairs of a uniform-marginal
/// path. Requires at least `m²` states.
pub fn empirical_transition(path: &ChainPath, m: usize) -> Result<EmpiricalTransition> {
    empirical_transition_pooled(std::slice::from_ref(path), m)
}

/// As [`empirical_transition`], pooling the transition counts of several
/// paths. Every path needs at least `m²` states.
pub fn empirical_transition_pooled(paths: &[ChainPath], m: usize) -> Result<EmpiricalTransition> {
    if m < 2 {
        return Err(Error::InvalidResolution {
            m,
            reason: "resolution must be at least 2",
        });
    }
    let first = paths
        .first()
        .ok_or_else(|| Error::InvalidArgument("no paths given".into()))?;
    let required = m * m;
    let mut counts = DMatrix::<f64>::zeros(m, m);
    for path in paths {
        if path.marginal != MarginalSpec::Uniform01 {
            return Err(Error::InvalidArgument(format!(
                "empirical transition needs a uniform01 path, got {}",
                path.marginal
            )));
        }
        if path.len() < required {
            return Err(Error::TooShort {
                len: path.len(),
                m,
                required,
            });
        }
        for w in path.values.windows(2) {
            counts[(cell_of(w[0], m), cell_of(w[1], m))] += 1.0;
        }
    }
    let mut empty_rows = Vec::new();
    for i in 0..m {
        let total: f64 = counts.row(i).sum();
        if total == 0.0 {
            empty_rows.push(i);
            counts.row_mut(i).fill(1.0 / m as f64);
        } else {
            counts.row_mut(i).unscale_mut(total);
        }
    }
    Ok(EmpiricalTransition {
        matrix: TransitionMatrix::from_parts(counts, first.spec_id.clone(), Construction::Empirical),
        empty_rows,
    })
}

/// Kolmogorov–Smirnov distance between the empirical law of `values` and
/// the continuous CDF `cdf`.
pub fn ks_statistic(values: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let f = cdf(x);
            (f - k as f64 / n).max((k + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// 1% critical value of the KS statistic for `n` observations.
pub fn ks_critical_1pct(n: usize) -> f64 {
    KS_CRITICAL_1PCT / (n as f64).sqrt()
}
