//! Checkerboard discretization of copulas.
//!
//! Cell `(i, j)` (0-based) is `(i/m, (i+1)/m] × (j/m, (j+1)/m]`. Entry
//! `P[i][j] = m · C-volume(cell)` is the probability of moving from stripe
//! `i` to stripe `j` for the chain whose copula spreads each cell's mass
//! uniformly over the cell. Under that model the fold product of copulas is
//! exactly the matrix product.

use std::fmt;
use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::copula::{CopulaSpec, Family, StudentT, UnitSquarePoint};
use crate::error::{Error, Result};
use crate::format::fmt_sig;
use crate::special::integrate_adaptive;

/// Largest accepted grid resolution.
pub const MAX_RESOLUTION: usize = 4096;
/// Resolutions used by reports unless configured otherwise.
pub const DEFAULT_RESOLUTIONS: [usize; 3] = [64, 128, 256];
/// Tolerance on row and column sums of constructed kernels.
pub const MARGINAL_TOL: f64 = 1e-12;
/// Sweep cap for the Sinkhorn balancing of quadrature-built kernels.
pub const MAX_BALANCE_SWEEPS: usize = 1000;
/// Largest exponent accepted by [`power`].
pub const MAX_POWER: u64 = 1_000_000;

/// Absolute quadrature tolerance for one row (a stripe of total mass `1/m`).
fn row_tolerance(m: usize) -> f64 {
    1e-14 / m as f64
}
const MAX_PANELS: usize = 20_000;

/// How a matrix came to be.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Construction {
    /// Second differences of a closed-form CDF; exact up to rounding.
    CdfDifference,
    /// Quadrature of the conditional law followed by balancing.
    Quadrature,
    /// Transition counts of a simulated path.
    Empirical,
    /// Product, power or mixture of other kernels.
    Algebra,
    /// Read from a grid file.
    Imported,
}

impl fmt::Display for Construction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Construction::CdfDifference => "cdf-difference",
            Construction::Quadrature => "quadrature",
            Construction::Empirical => "empirical",
            Construction::Algebra => "algebra",
            Construction::Imported => "imported",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub spec_id: String,
    pub method: Construction,
}

/// Row-stochastic `m × m` kernel; every kernel built from a copula is also
/// column-stochastic.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    entries: DMatrix<f64>,
    provenance: Provenance,
}

fn check_resolution(m: usize, min: usize) -> Result<()> {
    if m < min {
        return Err(Error::InvalidResolution {
            m,
            reason: if min == 1 { "must be positive" } else { "must be at least 2" },
        });
    }
    if m > MAX_RESOLUTION {
        return Err(Error::InvalidResolution {
            m,
            reason: "exceeds the resolution cap of 4096",
        });
    }
    Ok(())
}

impl TransitionMatrix {
    /// Wraps a square matrix after checking that entries are finite,
    /// nonnegative and that every row sums to one within `1e-9`.
    pub fn new(entries: DMatrix<f64>, provenance: Provenance) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::InvalidArgument(format!(
                "transition matrix must be square, got {}×{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        check_resolution(entries.nrows(), 1)?;
        if let Some(x) = entries.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::InvalidArgument(format!("invalid transition probability {x}")));
        }
        let p = Self { entries, provenance };
        let worst = p.row_sums().iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);
        if worst > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "rows must sum to one (worst deviation {worst:e})"
            )));
        }
        Ok(p)
    }

    pub(crate) fn from_parts(entries: DMatrix<f64>, spec_id: String, method: Construction) -> Self {
        Self {
            entries,
            provenance: Provenance { spec_id, method },
        }
    }

    /// Kernel of the independence copula: every entry `1/m`.
    pub fn independence(m: usize) -> Self {
        Self::from_parts(
            DMatrix::from_element(m, m, 1.0 / m as f64),
            "independence".into(),
            Construction::CdfDifference,
        )
    }

    /// Kernel of the upper Fréchet bound `min(u, v)`: the identity.
    pub fn identity(m: usize) -> Self {
        Self::from_parts(DMatrix::identity(m, m), "frechet_m".into(), Construction::CdfDifference)
    }

    pub fn m(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.m()).map(|i| self.entries.row(i).iter().sum()).collect()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.m()).map(|j| self.entries.column(j).iter().sum()).collect()
    }

    /// Largest deviation of a row or column sum from one.
    pub fn marginal_error(&self) -> f64 {
        self.row_sums()
            .into_iter()
            .chain(self.column_sums())
            .map(|s| (s - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_doubly_stochastic(&self, tol: f64) -> bool {
        self.marginal_error() <= tol
    }

    /// Sum of all entries divided by `m`, i.e. the total copula mass.
    pub fn total_mass(&self) -> f64 {
        self.entries.iter().sum::<f64>() / self.m() as f64
    }

    pub fn max_asymmetry(&self) -> f64 {
        (&self.entries - self.entries.transpose()).amax()
    }

    pub fn transpose(&self) -> Self {
        Self::from_parts(
            self.entries.transpose(),
            format!("transpose({})", self.provenance.spec_id),
            Construction::Algebra,
        )
    }

    /// Merges 2×2 blocks: the kernel of the same copula at resolution `m/2`.
    pub fn coarsen(&self) -> Result<Self> {
        let m = self.m();
        if !m.is_multiple_of(2) {
            return Err(Error::InvalidResolution {
                m,
                reason: "coarsening needs an even resolution",
            });
        }
        let h = m / 2;
        let entries = DMatrix::from_fn(h, h, |i, j| {
            let e = &self.entries;
            0.5 * ((e[(2 * i, 2 * j)] + e[(2 * i, 2 * j + 1)])
                + (e[(2 * i + 1, 2 * j)] + e[(2 * i + 1, 2 * j + 1)]))
        });
        Ok(Self::from_parts(entries, self.provenance.spec_id.clone(), self.provenance.method))
    }

    /// CDF of the checkerboard copula: cell masses spread uniformly over their
    /// cells, so the CDF is bilinear on each cell.
    pub fn checkerboard_cdf(&self, p: UnitSquarePoint) -> f64 {
        let m = self.m();
        let mf = m as f64;
        let frac = |x: f64, k: usize| (mf * x - k as f64).clamp(0.0, 1.0);
        let mut total = 0.0;
        for i in 0..m {
            let fu = frac(p.u, i);
            if fu == 0.0 {
                break;
            }
            let mut row = 0.0;
            for j in 0..m {
                let fv = frac(p.v, j);
                if fv == 0.0 {
                    break;
                }
                row += self.entries[(i, j)] * fv;
            }
            total += fu * row;
        }
        total / mf
    }
}

fn node(k: usize, m: usize) -> f64 {
    k as f64 / m as f64
}

fn cdf_at(spec: &CopulaSpec, u: f64, v: f64) -> Result<f64> {
    spec.cdf(UnitSquarePoint { u, v })
}

/// C-volume of cell `(i, j)` at resolution `m` (0-based indices).
///
/// Closed-CDF families use the exact second difference, which also captures
/// singular components. The Student t family integrates its conditional law
/// across the row stripe. Mixtures combine component volumes linearly.
pub fn cell_volume(spec: &CopulaSpec, i: usize, j: usize, m: usize) -> Result<f64> {
    check_resolution(m, 1)?;
    if i >= m || j >= m {
        return Err(Error::InvalidArgument(format!(
            "cell ({i}, {j}) outside a {m}×{m} grid"
        )));
    }
    match spec.family() {
        Family::Mixture {
            components,
            weights,
        } => {
            let mut acc = 0.0;
            for (c, w) in components.iter().zip(weights) {
                acc += w * cell_volume(c, i, j, m)?;
            }
            Ok(acc)
        }
        &Family::StudentT { rho, nu } => {
            let t = StudentT { rho, nu };
            let (y0, y1) = (t.quantile(node(j, m)), t.quantile(node(j + 1, m)));
            let q = integrate_adaptive(
                |s, out| {
                    let x = t.quantile(s);
                    out[0] = t.conditional_xy(x, y0);
                    out[1] = t.conditional_xy(x, y1);
                },
                node(i, m),
                node(i + 1, m),
                2,
                row_tolerance(m),
                MAX_PANELS,
            );
            if !q.converged {
                return Err(quadrature_failure(spec, i, q.error_estimate));
            }
            Ok((q.value[1] - q.value[0]).max(0.0))
        }
        _ => {
            let (u0, u1, v0, v1) = (node(i, m), node(i + 1, m), node(j, m), node(j + 1, m));
            let vol = (cdf_at(spec, u1, v1)? - cdf_at(spec, u0, v1)?)
                - (cdf_at(spec, u1, v0)? - cdf_at(spec, u0, v0)?);
            Ok(vol.max(0.0))
        }
    }
}

fn quadrature_failure(spec: &CopulaSpec, row: usize, error_estimate: f64) -> Error {
    Error::NumericalFailure {
        context: format!("cell quadrature for {} in row {row}", spec.id()),
        error_estimate,
    }
}

/// Largest negative rounding residue silently clipped to zero.
const NEGATIVE_CLIP: f64 = 1e-12;

/// Kernel of `spec` at resolution `m`, doubly stochastic within `1e-12`.
pub fn discretize(spec: &CopulaSpec, m: usize) -> Result<TransitionMatrix> {
    check_resolution(m, 2)?;
    let entries = match spec.family() {
        Family::Mixture {
            components,
            weights,
        } => {
            let parts = components
                .iter()
                .map(|c| discretize(c, m))
                .collect::<Result<Vec<_>>>()?;
            let pairs: Vec<(f64, &TransitionMatrix)> = weights.iter().copied().zip(&parts).collect();
            let method = if spec.needs_quadrature() {
                Construction::Quadrature
            } else {
                Construction::CdfDifference
            };
            let mixed = mix(&pairs)?;
            return Ok(TransitionMatrix::from_parts(mixed.entries, spec.id().to_string(), method));
        }
        Family::Independence => return Ok(TransitionMatrix::independence(m)),
        Family::FrechetM => return Ok(TransitionMatrix::identity(m)),
        &Family::StudentT { rho, nu } => {
            let raw = student_t_masses(spec, StudentT { rho, nu }, m)?;
            let balanced = balance(symmetrize(raw), MARGINAL_TOL)?;
            return Ok(TransitionMatrix::from_parts(
                balanced,
                spec.id().to_string(),
                Construction::Quadrature,
            ));
        }
        _ => cdf_difference_entries(spec, m)?,
    };
    Ok(TransitionMatrix::from_parts(entries, spec.id().to_string(), Construction::CdfDifference))
}

fn cdf_difference_entries(spec: &CopulaSpec, m: usize) -> Result<DMatrix<f64>> {
    let table: Vec<Vec<f64>> = (0..=m)
        .into_par_iter()
        .map(|i| (0..=m).map(|j| cdf_at(spec, node(i, m), node(j, m))).collect())
        .collect::<Result<_>>()?;
    let mf = m as f64;
    let mut entries = DMatrix::zeros(m, m);
    for i in 0..m {
        let (lo, hi) = (&table[i], &table[i + 1]);
        for j in 0..m {
            let vol = (hi[j + 1] - lo[j + 1]) - (hi[j] - lo[j]);
            if vol < -NEGATIVE_CLIP {
                return Err(Error::NumericalFailure {
                    context: format!("negative cell mass {vol:e} for {} at ({i}, {j})", spec.id()),
                    error_estimate: -vol,
                });
            }
            entries[(i, j)] = mf * vol.max(0.0);
        }
    }
    Ok(entries)
}

/// Unbalanced kernel `m · mass` of the Student t copula. For each row stripe
/// the conditional law at every grid ordinate is integrated with one shared
/// set of panels, so each row sums to one up to rounding.
fn student_t_masses(spec: &CopulaSpec, t: StudentT, m: usize) -> Result<DMatrix<f64>> {
    let ys: Vec<f64> = (0..=m).map(|j| t.quantile(node(j, m))).collect();
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let q = integrate_adaptive(
                |s, out| {
                    let x = t.quantile(s);
                    for (o, &y) in out.iter_mut().zip(&ys) {
                        *o = t.conditional_xy(x, y);
                    }
                },
                node(i, m),
                node(i + 1, m),
                m + 1,
                row_tolerance(m),
                MAX_PANELS,
            );
            if !q.converged {
                return Err(quadrature_failure(spec, i, q.error_estimate));
            }
            let mf = m as f64;
            Ok((0..m)
                .map(|j| mf * (q.value[j + 1] - q.value[j]).max(0.0))
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(m, m, |i, j| rows[i][j]))
}

/// Unbalanced Student t kernel, exposed for diagnostics.
pub fn student_t_unbalanced(spec: &CopulaSpec, m: usize) -> Result<DMatrix<f64>> {
    check_resolution(m, 2)?;
    match spec.family() {
        &Family::StudentT { rho, nu } => student_t_masses(spec, StudentT { rho, nu }, m),
        _ => Err(Error::InvalidArgument(format!("{} is not a Student t copula", spec.id()))),
    }
}

fn symmetrize(a: DMatrix<f64>) -> DMatrix<f64> {
    let t = a.transpose();
    (a + t) * 0.5
}

/// Alternating row/column normalization until both marginals are within
/// `tol` of one, followed by a final symmetrization (which cannot increase
/// the marginal error). Gives up after [`MAX_BALANCE_SWEEPS`] sweeps.
pub fn balance(mut a: DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let deviation = |a: &DMatrix<f64>| {
        (0..n)
            .map(|k| {
                let r: f64 = a.row(k).iter().sum();
                let c: f64 = a.column(k).iter().sum();
                (r - 1.0).abs().max((c - 1.0).abs())
            })
            .fold(0.0, f64::max)
    };
    let target = tol * 0.1;
    let mut sweeps = 0;
    while deviation(&a) > target && sweeps < MAX_BALANCE_SWEEPS {
        for i in 0..n {
            let s: f64 = a.row(i).iter().sum();
            if s > 0.0 {
                a.row_mut(i).unscale_mut(s);
            }
        }
        for j in 0..n {
            let s: f64 = a.column(j).iter().sum();
            if s > 0.0 {
                a.column_mut(j).unscale_mut(s);
            }
        }
        sweeps += 1;
    }
    let a = symmetrize(a);
    let dev = deviation(&a);
    if dev > tol {
        return Err(Error::NumericalFailure {
            context: format!("balancing stalled after {sweeps} sweeps"),
            error_estimate: dev,
        });
    }
    Ok(a)
}

fn same_resolution(p: &TransitionMatrix, q: &TransitionMatrix) -> Result<()> {
    if p.m() != q.m() {
        return Err(Error::ResolutionMismatch {
            left: p.m(),
            right: q.m(),
        });
    }
    Ok(())
}

/// Fold product: the kernel of `C₁ ∗ C₂` is `P · Q`.
pub fn fold(p: &TransitionMatrix, q: &TransitionMatrix) -> Result<TransitionMatrix> {
    same_resolution(p, q)?;
    Ok(TransitionMatrix::from_parts(
        &p.entries * &q.entries,
        format!("fold({},{})", p.provenance.spec_id, q.provenance.spec_id),
        Construction::Algebra,
    ))
}

/// `n`-fold product of `p` with itself by repeated squaring.
pub fn power(p: &TransitionMatrix, n: u64) -> Result<TransitionMatrix> {
    if n == 0 || n > MAX_POWER {
        return Err(Error::InvalidArgument(format!(
            "power exponent {n} outside [1, {MAX_POWER}]"
        )));
    }
    if n == 1 {
        return Ok(p.clone());
    }
    let mut result: Option<DMatrix<f64>> = None;
    let mut base = p.entries.clone();
    let mut k = n;
    loop {
        if k & 1 == 1 {
            result = Some(match result {
                None => base.clone(),
                Some(r) => &r * &base,
            });
        }
        k >>= 1;
        if k == 0 {
            break;
        }
        base = &base * &base;
    }
    Ok(TransitionMatrix::from_parts(
        result.expect("n >= 1"),
        format!("power({},{n})", p.provenance.spec_id),
        Construction::Algebra,
    ))
}

/// Convex combination of kernels.
pub fn mix(pairs: &[(f64, &TransitionMatrix)]) -> Result<TransitionMatrix> {
    let bad = |reason: String| Error::BadWeights {
        field: String::new(),
        reason,
    };
    let (_, first) = pairs.first().ok_or_else(|| bad("no kernels to mix".into()))?;
    if let Some((w, _)) = pairs.iter().find(|(w, _)| !(w.is_finite() && *w >= 0.0)) {
        return Err(bad(format!("weight {w} must be nonnegative")));
    }
    let sum: f64 = pairs.iter().map(|(w, _)| w).sum();
    if (sum - 1.0).abs() > crate::copula::WEIGHT_SUM_TOL {
        return Err(bad(format!("weights sum to {sum}, not 1")));
    }
    let mut acc = DMatrix::zeros(first.m(), first.m());
    let mut ids = Vec::with_capacity(pairs.len());
    for (w, p) in pairs {
        same_resolution(first, p)?;
        acc += &p.entries * *w;
        ids.push(format!("{w}*{}", p.provenance.spec_id));
    }
    Ok(TransitionMatrix::from_parts(
        acc,
        format!("mix({})", ids.join("+")),
        Construction::Algebra,
    ))
}

/// Writes the grid text format: `m=<int>` then `m` rows of `m`
/// space-separated entries with 17 significant digits, LF line endings.
pub fn write_grid<W: Write>(p: &TransitionMatrix, mut out: W) -> Result<()> {
    let m = p.m();
    writeln!(out, "m={m}")?;
    let mut line = String::new();
    for i in 0..m {
        line.clear();
        for j in 0..m {
            if j > 0 {
                line.push(' ');
            }
            line.push_str(&fmt_sig(p.get(i, j), 17));
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    Ok(())
}

/// Reads the grid text format written by [`write_grid`].
pub fn read_grid<R: BufRead>(input: R, spec_id: &str) -> Result<TransitionMatrix> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty file".into()))??;
    let m: usize = header
        .trim_end()
        .strip_prefix("m=")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Parse(format!("bad header {header:?}")))?;
    check_resolution(m, 1)?;
    let mut data = Vec::with_capacity(m * m);
    for i in 0..m {
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse(format!("missing row {i}")))??;
        let before = data.len();
        for tok in line.split_ascii_whitespace() {
            data.push(
                tok.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad entry {tok:?} in row {i}")))?,
            );
        }
        if data.len() - before != m {
            return Err(Error::Parse(format!(
                "row {i} has {} entries, expected {m}",
                data.len() - before
            )));
        }
    }
    if let Some(extra) = lines.next() {
        if !extra?.trim().is_empty() {
            return Err(Error::Parse("trailing data after the last row".into()));
        }
    }
    TransitionMatrix::new(
        DMatrix::from_row_slice(m, m, &data),
        Provenance {
            spec_id: spec_id.to_string(),
            method: Construction::Imported,
        },
    )
}

#[cfg(test)]
mod tests;
