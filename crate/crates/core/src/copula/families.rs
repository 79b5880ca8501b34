//! Closed forms for the individual families. Callers handle the boundary of
//! the unit square; these functions assume `u, v ∈ (0, 1)`.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::special::{integrate_adaptive, t_cdf, t_pdf, t_quantile};

// Clayton: C = (u^-θ + v^-θ - 1)^(-1/θ), rewritten around a = min(u, v) so
// no power overflows: C = a (1 + (a/b)^θ - a^θ)^(-1/θ).

pub(crate) fn clayton_cdf(u: f64, v: f64, theta: f64) -> f64 {
    let (a, b) = if u <= v { (u, v) } else { (v, u) };
    a * (-((a / b).powf(theta) - a.powf(theta)).ln_1p() / theta).exp()
}

pub(crate) fn clayton_conditional(u: f64, v: f64, theta: f64) -> f64 {
    let t = (u / v).powf(theta) - u.powf(theta);
    (-(theta + 1.0) / theta * t.ln_1p()).exp()
}

pub(crate) fn clayton_inverse(u: f64, p: f64, theta: f64) -> f64 {
    let e = (-theta / (theta + 1.0) * p.ln()).exp_m1();
    (u * (e + u.powf(theta)).powf(-1.0 / theta)).min(1.0)
}

pub(crate) fn clayton_density(u: f64, v: f64, theta: f64) -> f64 {
    let (a, b) = if u <= v { (u, v) } else { (v, u) };
    let t = (a / b).powf(theta) - a.powf(theta);
    let log = (1.0 + theta).ln() + theta * a.ln() - (theta + 1.0) * b.ln()
        - (2.0 * theta + 1.0) / theta * t.ln_1p();
    log.exp()
}

// Gumbel: with x = -ln u, y = -ln v, w = (x^β + y^β)^(1/β), C = exp(-w).

fn gumbel_w(x: f64, y: f64, beta: f64) -> f64 {
    let (hi, lo) = if x >= y { (x, y) } else { (y, x) };
    if hi == 0.0 {
        return 0.0;
    }
    hi * ((lo / hi).powf(beta).ln_1p() / beta).exp()
}

pub(crate) fn gumbel_cdf(u: f64, v: f64, beta: f64) -> f64 {
    (-gumbel_w(-u.ln(), -v.ln(), beta)).exp()
}

pub(crate) fn gumbel_conditional(u: f64, v: f64, beta: f64) -> f64 {
    let x = -u.ln();
    let y = -v.ln();
    let w = gumbel_w(x, y, beta);
    (x - w).exp() * (x / w).powf(beta - 1.0)
}

pub(crate) fn gumbel_density(u: f64, v: f64, beta: f64) -> f64 {
    let x = -u.ln();
    let y = -v.ln();
    let w = gumbel_w(x, y, beta);
    (x + y - w).exp() * (x * y / (w * w)).powf(beta - 1.0) * (1.0 + (beta - 1.0) / w)
}

// Marshall–Olkin: C = min(u v^(1-α), v u^(1-β)); the first branch is active
// when u^β <= v^α. The conditional law jumps at v = u^(β/α).

pub(crate) fn mo_cdf(u: f64, v: f64, alpha: f64, beta: f64) -> f64 {
    (u * v.powf(1.0 - alpha)).min(v * u.powf(1.0 - beta))
}

pub(crate) fn mo_conditional(u: f64, v: f64, alpha: f64, beta: f64) -> f64 {
    if u.powf(beta) <= v.powf(alpha) {
        v.powf(1.0 - alpha)
    } else {
        (1.0 - beta) * v * u.powf(-beta)
    }
}

pub(crate) fn mo_density(u: f64, v: f64, alpha: f64, beta: f64) -> f64 {
    if u.powf(beta) <= v.powf(alpha) {
        (1.0 - alpha) * v.powf(-alpha)
    } else {
        (1.0 - beta) * u.powf(-beta)
    }
}

/// Student t copula in quantile coordinates.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StudentT {
    pub rho: f64,
    pub nu: f64,
}

impl StudentT {
    pub fn quantile(&self, p: f64) -> f64 {
        t_quantile(p, self.nu)
    }

    /// Scale of `Y | X = x`, which is t with `ν + 1` degrees of freedom.
    fn cond_scale(&self, x: f64) -> f64 {
        ((self.nu + x * x) * (1.0 - self.rho * self.rho) / (self.nu + 1.0)).sqrt()
    }

    /// `P(V <= v | U = u)` with `x = t_ν⁻¹(u)`, `y = t_ν⁻¹(v)`.
    pub fn conditional_xy(&self, x: f64, y: f64) -> f64 {
        if y == f64::INFINITY {
            return 1.0;
        }
        if y == f64::NEG_INFINITY {
            return 0.0;
        }
        t_cdf((y - self.rho * x) / self.cond_scale(x), self.nu + 1.0)
    }

    pub fn conditional(&self, u: f64, v: f64) -> f64 {
        self.conditional_xy(self.quantile(u), self.quantile(v))
    }

    pub fn inverse(&self, u: f64, p: f64) -> f64 {
        let x = self.quantile(u);
        let q = t_quantile(p, self.nu + 1.0);
        let y = self.rho * x + q * self.cond_scale(x);
        t_cdf(y, self.nu)
    }

    pub fn density(&self, u: f64, v: f64) -> f64 {
        let (x, y) = (self.quantile(u), self.quantile(v));
        let (rho, nu) = (self.rho, self.nu);
        let one_m = 1.0 - rho * rho;
        let q = (x * x - 2.0 * rho * x * y + y * y) / (nu * one_m);
        let log_joint = ln_gamma(0.5 * (nu + 2.0))
            - ln_gamma(0.5 * nu)
            - (nu * std::f64::consts::PI).ln()
            - 0.5 * one_m.ln()
            - 0.5 * (nu + 2.0) * q.ln_1p();
        (log_joint - t_pdf(x, nu).ln() - t_pdf(y, nu).ln()).exp()
    }

    /// `C(u, v) = ∫₀^min h(s, max) ds` by adaptive quadrature; symmetric by
    /// construction.
    pub fn cdf(&self, u: f64, v: f64) -> Result<f64> {
        let (a, b) = if u <= v { (u, v) } else { (v, u) };
        let y = self.quantile(b);
        let q = integrate_adaptive(
            |s, out| out[0] = self.conditional_xy(self.quantile(s), y),
            0.0,
            a,
            1,
            STUDENT_CDF_TOL,
            2000,
        );
        if q.error_estimate > STUDENT_CDF_MAX_ERROR {
            return Err(Error::NumericalFailure {
                context: format!("student t copula cdf at ({u}, {v})"),
                error_estimate: q.error_estimate,
            });
        }
        Ok(q.value[0].clamp(0.0, a))
    }
}

/// Absolute error requested from the Student t CDF quadrature.
pub(crate) const STUDENT_CDF_TOL: f64 = 1e-13;
/// Error above which the Student t CDF is reported as a failure.
pub(crate) const STUDENT_CDF_MAX_ERROR: f64 = 1e-8;
