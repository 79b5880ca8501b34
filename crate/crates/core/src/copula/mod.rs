//! Copula families, their conditional laws and densities.
//!
//! Every supported copula is exchangeable, so the chain it generates is
//! reversible. The conditional distribution `C_{,1}(u, v) = ∂C/∂u` is the
//! one-step transition law of the stationary chain with uniform marginals.

mod families;
mod spec;

pub use spec::{validate, CopulaSpec, Family, RawCopula, MAX_NESTING, WEIGHT_SUM_TOL};

use crate::error::{Error, Result};

pub(crate) use families::StudentT;

/// Coordinates are clamped into `[DENSITY_CLAMP, 1 - DENSITY_CLAMP]` before a
/// density is evaluated.
pub const DENSITY_CLAMP: f64 = 1e-15;

/// Iteration cap for the bisection branch of [`CopulaSpec::inverse_conditional`].
pub const MAX_BISECTION_STEPS: usize = 200;

/// A point of the closed unit square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitSquarePoint {
    pub u: f64,
    pub v: f64,
}

impl UnitSquarePoint {
    pub fn new(u: f64, v: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidArgument(format!(
                "point ({u}, {v}) outside the unit square"
            )));
        }
        Ok(Self { u, v })
    }
}

/// Value of the absolutely continuous density together with a flag telling
/// whether the copula also has a singular component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Density {
    pub value: f64,
    pub singular_part: bool,
}

fn open_unit(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} = {x} must lie in (0, 1)")))
    }
}

fn closed_unit(name: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} = {x} must lie in [0, 1]")))
    }
}

impl CopulaSpec {
    /// Joint distribution function `C(u, v)`.
    pub fn cdf(&self, p: UnitSquarePoint) -> Result<f64> {
        let UnitSquarePoint { u, v } = p;
        if u <= 0.0 || v <= 0.0 {
            return Ok(0.0);
        }
        if u >= 1.0 {
            return Ok(v.min(1.0));
        }
        if v >= 1.0 {
            return Ok(u);
        }
        let value = match self.family() {
            Family::Independence => u * v,
            Family::FrechetM => u.min(v),
            Family::Clayton { theta } => families::clayton_cdf(u, v, *theta),
            Family::Gumbel { beta } => families::gumbel_cdf(u, v, *beta),
            &Family::StudentT { rho, nu } => StudentT { rho, nu }.cdf(u, v)?,
            Family::MarshallOlkin { alpha, beta } => families::mo_cdf(u, v, *alpha, *beta),
            Family::Mixture {
                components,
                weights,
            } => {
                let mut acc = 0.0;
                for (c, w) in components.iter().zip(weights) {
                    acc += w * c.cdf(p)?;
                }
                acc
            }
        };
        // Rounding can push closed forms a hair past the Fréchet bounds.
        Ok(value.clamp((u + v - 1.0).max(0.0), u.min(v)))
    }

    /// Conditional distribution `P(U₁ <= v | U₀ = u) = ∂C/∂u (u, v)`,
    /// right-continuous in `v`.
    pub fn conditional_cdf(&self, u: f64, v: f64) -> Result<f64> {
        open_unit("u", u)?;
        closed_unit("v", v)?;
        Ok(self.conditional_unchecked(u, v))
    }

    pub(crate) fn conditional_unchecked(&self, u: f64, v: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        if v >= 1.0 {
            return 1.0;
        }
        match self.family() {
            Family::Independence => v,
            Family::FrechetM => {
                if v >= u {
                    1.0
                } else {
                    0.0
                }
            }
            Family::Clayton { theta } => families::clayton_conditional(u, v, *theta),
            Family::Gumbel { beta } => families::gumbel_conditional(u, v, *beta),
            &Family::StudentT { rho, nu } => StudentT { rho, nu }.conditional(u, v),
            Family::MarshallOlkin { alpha, beta } => {
                families::mo_conditional(u, v, *alpha, *beta)
            }
            Family::Mixture {
                components,
                weights,
            } => components
                .iter()
                .zip(weights)
                .map(|(c, w)| w * c.conditional_unchecked(u, v))
                .sum(),
        }
    }

    /// Density of the absolutely continuous part at `p`; coordinates are
    /// clamped to `[1e-15, 1 - 1e-15]` first.
    pub fn density(&self, p: UnitSquarePoint) -> Result<Density> {
        let u = p.u.clamp(DENSITY_CLAMP, 1.0 - DENSITY_CLAMP);
        let v = p.v.clamp(DENSITY_CLAMP, 1.0 - DENSITY_CLAMP);
        let value = self.density_unchecked(u, v);
        if !value.is_finite() {
            return Err(Error::NumericalFailure {
                context: format!("{} density at ({u}, {v})", self.id()),
                error_estimate: f64::INFINITY,
            });
        }
        Ok(Density {
            value,
            singular_part: self.has_singular_part(),
        })
    }

    fn density_unchecked(&self, u: f64, v: f64) -> f64 {
        match self.family() {
            Family::Independence => 1.0,
            Family::FrechetM => 0.0,
            Family::Clayton { theta } => families::clayton_density(u, v, *theta),
            Family::Gumbel { beta } => families::gumbel_density(u, v, *beta),
            &Family::StudentT { rho, nu } => StudentT { rho, nu }.density(u, v),
            Family::MarshallOlkin { alpha, beta } => families::mo_density(u, v, *alpha, *beta),
            Family::Mixture {
                components,
                weights,
            } => components
                .iter()
                .zip(weights)
                .map(|(c, w)| w * c.density_unchecked(u, v))
                .sum(),
        }
    }

    /// Leftmost `v` with `conditional_cdf(u, v) >= prob`, to within `tol`.
    ///
    /// Independence, Clayton and Student t use closed forms; other families
    /// and all mixtures bisect. Across a jump of the conditional law the jump
    /// location is returned.
    pub fn inverse_conditional(&self, u: f64, prob: f64, tol: f64) -> Result<f64> {
        open_unit("u", u)?;
        closed_unit("prob", prob)?;
        if tol.is_nan() || tol <= 0.0 {
            return Err(Error::InvalidArgument(format!("tol = {tol} must be positive")));
        }
        if prob <= 0.0 {
            return Ok(0.0);
        }
        match self.family() {
            Family::Independence => Ok(prob),
            Family::FrechetM => Ok(u),
            // Both conditional laws stay below 1 for v < 1.
            Family::Clayton { .. } | Family::StudentT { .. } if prob >= 1.0 => Ok(1.0),
            Family::Clayton { theta } => Ok(families::clayton_inverse(u, prob, *theta)),
            &Family::StudentT { rho, nu } => Ok(StudentT { rho, nu }.inverse(u, prob)),
            _ => self.bisect(u, prob, tol),
        }
    }

    fn bisect(&self, u: f64, prob: f64, tol: f64) -> Result<f64> {
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        for _ in 0..MAX_BISECTION_STEPS {
            if hi - lo <= tol {
                return Ok(hi);
            }
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                // Bracket is down to adjacent floats.
                return Ok(hi);
            }
            if self.conditional_unchecked(u, mid) >= prob {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        if hi - lo <= tol {
            return Ok(hi);
        }
        Err(Error::NoConvergence {
            context: format!("inverse conditional of {} at u = {u}", self.id()),
            bracket_width: hi - lo,
            step: None,
        })
    }
}

#[cfg(test)]
mod tests;
