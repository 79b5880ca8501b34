//! Fixtures shared by the benchmarks.

use copula_markov::CopulaSpec;

/// Families with a closed-form CDF, one per construction path.
pub fn closed_form_specs() -> Vec<CopulaSpec> {
    vec![
        CopulaSpec::clayton(1.0).expect("valid"),
        CopulaSpec::gumbel(2.0).expect("valid"),
        CopulaSpec::marshall_olkin(0.5, 0.5).expect("valid"),
    ]
}

pub fn student_t() -> CopulaSpec {
    CopulaSpec::student_t(0.5, 3.0).expect("valid")
}

/// Mixture whose conditional quantile needs bisection.
pub fn bisection_mixture() -> CopulaSpec {
    CopulaSpec::mixture(&[
        (0.5, CopulaSpec::clayton(1.0).expect("valid")),
        (0.5, CopulaSpec::gumbel(2.0).expect("valid")),
    ])
    .expect("valid")
}
