use serde::{Deserialize, Serialize};

/// One candidate's contribution to the additive mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateTerm {
    pub beta1: f64,
    pub b: Vec<f64>,
    pub knots: Vec<f64>,
    pub kappa2_b: f64,
}

impl CandidateTerm {
    #[inline]
    pub fn eval(&self, t1: f64) -> f64 {
        let mut v = self.beta1 * t1;
        for (b, r) in self.b.iter().zip(&self.knots) {
            v += b * (t1 - r).abs();
        }
        v
    }
}

/// Penalized linear spline regression of the true clinical effect on the true
/// candidate effects, with a single global intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineState {
    pub beta0: f64,
    pub terms: Vec<CandidateTerm>,
    pub sigma2_eps: f64,
}

/// Mean of T2 given one true effect per candidate.
pub fn spline_eval(t1: &[f64], state: &SplineState) -> f64 {
    debug_assert_eq!(t1.len(), state.terms.len());
    state
        .terms
        .iter()
        .zip(t1)
        .fold(state.beta0, |acc, (term, &t)| acc + term.eval(t))
}
