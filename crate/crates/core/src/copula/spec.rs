use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum mixture nesting depth accepted by [`validate`].
pub const MAX_NESTING: usize = 4;

/// Tolerance on the mixture weight sum before renormalization.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Unvalidated copula description, as read from configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum RawCopula {
    Independence,
    FrechetM,
    Clayton {
        theta: f64,
    },
    Gumbel {
        beta: f64,
    },
    StudentT {
        rho: f64,
        nu: f64,
    },
    MarshallOlkin {
        alpha: f64,
        beta: f64,
    },
    Mixture {
        components: Vec<RawCopula>,
        weights: Vec<f64>,
    },
}

/// Validated copula family with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// Product copula `uv`.
    Independence,
    /// Upper Fréchet bound `min(u, v)`.
    FrechetM,
    Clayton { theta: f64 },
    Gumbel { beta: f64 },
    StudentT { rho: f64, nu: f64 },
    MarshallOlkin { alpha: f64, beta: f64 },
    /// Convex combination; weights are nonnegative and sum to one.
    Mixture {
        components: Vec<CopulaSpec>,
        weights: Vec<f64>,
    },
}

/// A copula that passed [`validate`]. Immutable; cheap to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct CopulaSpec {
    family: Family,
    id: String,
}

impl CopulaSpec {
    pub fn family(&self) -> &Family {
        &self.family
    }

    /// Stable textual identifier, e.g. `clayton(theta=1)`.
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn independence() -> Self {
        validate(&RawCopula::Independence).expect("always valid")
    }

    pub fn frechet_m() -> Self {
        validate(&RawCopula::FrechetM).expect("always valid")
    }

    pub fn clayton(theta: f64) -> Result<Self> {
        validate(&RawCopula::Clayton { theta })
    }

    pub fn gumbel(beta: f64) -> Result<Self> {
        validate(&RawCopula::Gumbel { beta })
    }

    pub fn student_t(rho: f64, nu: f64) -> Result<Self> {
        validate(&RawCopula::StudentT { rho, nu })
    }

    pub fn marshall_olkin(alpha: f64, beta: f64) -> Result<Self> {
        validate(&RawCopula::MarshallOlkin { alpha, beta })
    }

    /// Convex mixture of already validated copulas.
    pub fn mixture(parts: &[(f64, CopulaSpec)]) -> Result<Self> {
        let raw = RawCopula::Mixture {
            components: parts.iter().map(|(_, c)| c.to_raw()).collect(),
            weights: parts.iter().map(|(w, _)| *w).collect(),
        };
        validate(&raw)
    }

    pub fn to_raw(&self) -> RawCopula {
        match &self.family {
            Family::Independence => RawCopula::Independence,
            Family::FrechetM => RawCopula::FrechetM,
            Family::Clayton { theta } => RawCopula::Clayton { theta: *theta },
            Family::Gumbel { beta } => RawCopula::Gumbel { beta: *beta },
            Family::StudentT { rho, nu } => RawCopula::StudentT { rho: *rho, nu: *nu },
            Family::MarshallOlkin { alpha, beta } => RawCopula::MarshallOlkin {
                alpha: *alpha,
                beta: *beta,
            },
            Family::Mixture {
                components,
                weights,
            } => RawCopula::Mixture {
                components: components.iter().map(CopulaSpec::to_raw).collect(),
                weights: weights.clone(),
            },
        }
    }

    /// True when the family's cell masses need quadrature rather than exact
    /// CDF differences.
    pub fn needs_quadrature(&self) -> bool {
        match &self.family {
            Family::StudentT { .. } => true,
            Family::Mixture { components, .. } => components.iter().any(|c| c.needs_quadrature()),
            _ => false,
        }
    }

    /// True when the copula charges a set of zero area (the flag reported by
    /// [`CopulaSpec::density`](crate::copula::Density)).
    pub fn has_singular_part(&self) -> bool {
        match &self.family {
            Family::FrechetM => true,
            Family::MarshallOlkin { alpha, beta } => *alpha > 0.0 && *beta > 0.0,
            Family::Mixture {
                components,
                weights,
            } => components
                .iter()
                .zip(weights)
                .any(|(c, &w)| w > 0.0 && c.has_singular_part()),
            _ => false,
        }
    }

    /// Nesting depth: 0 for a plain family, 1 for a mixture of plain families.
    pub fn depth(&self) -> usize {
        match &self.family {
            Family::Mixture { components, .. } => {
                1 + components.iter().map(CopulaSpec::depth).max().unwrap_or(0)
            }
            _ => 0,
        }
    }
}

impl fmt::Display for CopulaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id)
    }
}

fn out_of_range(field: &str, value: f64, allowed: &'static str) -> Error {
    Error::OutOfRangeParameter {
        field: field.to_string(),
        value,
        allowed,
    }
}

/// Checks parameter ranges and mixture weights, producing an immutable spec.
///
/// Mixture weights whose sum is within 1e-12 of one are renormalized to sum to
/// one; anything further off is rejected.
pub fn validate(raw: &RawCopula) -> Result<CopulaSpec> {
    validate_at(raw, 0)
}

fn validate_at(raw: &RawCopula, depth: usize) -> Result<CopulaSpec> {
    let family = match raw {
        RawCopula::Independence => Family::Independence,
        RawCopula::FrechetM => Family::FrechetM,
        &RawCopula::Clayton { theta } => {
            if !(theta.is_finite() && theta > 0.0) {
                return Err(out_of_range("theta", theta, "(0, ∞)"));
            }
            Family::Clayton { theta }
        }
        &RawCopula::Gumbel { beta } => {
            if !(beta.is_finite() && beta >= 1.0) {
                return Err(out_of_range("beta", beta, "[1, ∞)"));
            }
            Family::Gumbel { beta }
        }
        &RawCopula::StudentT { rho, nu } => {
            if !(rho.is_finite() && rho.abs() < 1.0) {
                return Err(out_of_range("rho", rho, "(-1, 1)"));
            }
            if !(nu.is_finite() && nu > 2.0) {
                return Err(out_of_range("nu", nu, "(2, ∞)"));
            }
            Family::StudentT { rho, nu }
        }
        &RawCopula::MarshallOlkin { alpha, beta } => {
            if !(0.0..=1.0).contains(&alpha) {
                return Err(out_of_range("alpha", alpha, "[0, 1]"));
            }
            if !(0.0..=1.0).contains(&beta) {
                return Err(out_of_range("beta", beta, "[0, 1]"));
            }
            Family::MarshallOlkin { alpha, beta }
        }
        RawCopula::Mixture {
            components,
            weights,
        } => {
            if depth + 1 > MAX_NESTING {
                return Err(Error::NestingTooDeep {
                    depth: depth + 1,
                    limit: MAX_NESTING,
                });
            }
            let bad = |reason: String| Error::BadWeights {
                field: "weights".into(),
                reason,
            };
            if components.is_empty() {
                return Err(bad("mixture needs at least one component".into()));
            }
            if components.len() != weights.len() {
                return Err(bad(format!(
                    "{} weights for {} components",
                    weights.len(),
                    components.len()
                )));
            }
            if let Some((k, w)) = weights
                .iter()
                .enumerate()
                .find(|(_, w)| !(w.is_finite() && **w >= 0.0))
            {
                return Err(bad(format!("weight {k} is {w}, must be nonnegative")));
            }
            let sum: f64 = weights.iter().sum();
            if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
                return Err(bad(format!("weights sum to {sum}, not 1")));
            }
            let parts = components
                .iter()
                .enumerate()
                .map(|(k, c)| {
                    validate_at(c, depth + 1).map_err(|e| e.prefix_field(&format!("components[{k}]")))
                })
                .collect::<Result<Vec<_>>>()?;
            Family::Mixture {
                components: parts,
                weights: weights.iter().map(|w| w / sum).collect(),
            }
        }
    };
    let id = make_id(&family);
    Ok(CopulaSpec { family, id })
}

fn make_id(family: &Family) -> String {
    match family {
        Family::Independence => "independence".into(),
        Family::FrechetM => "frechet_m".into(),
        Family::Clayton { theta } => format!("clayton(theta={theta})"),
        Family::Gumbel { beta } => format!("gumbel(beta={beta})"),
        Family::StudentT { rho, nu } => format!("student_t(rho={rho},nu={nu})"),
        Family::MarshallOlkin { alpha, beta } => {
            format!("marshall_olkin(alpha={alpha},beta={beta})")
        }
        Family::Mixture {
            components,
            weights,
        } => {
            let terms: Vec<String> = components
                .iter()
                .zip(weights)
                .map(|(c, w)| format!("{w}*{}", c.id))
                .collect();
            format!("mixture({})", terms.join("+"))
        }
    }
}
