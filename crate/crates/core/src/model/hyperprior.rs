use serde::{Deserialize, Serialize};

use super::ModelError;

/// Hyper-priors of the base measure G0 = N(phi, sigma²_mu) x Gamma(psi, xi)
/// (the gamma is on the component precision 1/tau², rate xi).
///
/// phi ~ N(phi_mean, phi_var), sigma²_mu ~ IG(sigma2_mu_shape,
/// sigma2_mu_scale), xi ~ Gamma(xi_shape, rate xi_rate); psi is fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseHyperPrior {
    pub phi_mean: f64,
    pub phi_var: f64,
    pub sigma2_mu_shape: f64,
    pub sigma2_mu_scale: f64,
    pub psi: f64,
    pub xi_shape: f64,
    pub xi_rate: f64,
}

impl BaseHyperPrior {
    /// E[tau²] = E[xi] / (psi - 1), finite for psi > 1.
    pub fn prior_mean_tau2(&self) -> f64 {
        (self.xi_shape / self.xi_rate) / (self.psi - 1.0)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let pos = [
            self.phi_var,
            self.sigma2_mu_shape,
            self.sigma2_mu_scale,
            self.psi,
            self.xi_shape,
            self.xi_rate,
        ];
        if pos.iter().all(|v| *v > 0.0 && v.is_finite()) && self.phi_mean.is_finite() {
            Ok(())
        } else {
            Err(ModelError::Config("base hyper-prior constants must be positive".into()))
        }
    }
}

/// Constants of the data-dependent rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataDependentRule {
    pub sigma2_mu_shape: f64,
    pub psi: f64,
    pub xi_shape: f64,
}

impl Default for DataDependentRule {
    fn default() -> Self {
        Self {
            sigma2_mu_shape: 2.0,
            psi: 2.0,
            xi_shape: 2.0,
        }
    }
}

/// Center phi at the sample mean with the squared sample range as variance;
/// set the sigma²_mu and xi priors so that E[sigma²_mu] and E[tau²] both equal
/// the sample variance.
pub fn data_dependent_hyperpriors(
    values: &[f64],
    rule: &DataDependentRule,
) -> Result<BaseHyperPrior, ModelError> {
    if values.len() < 2 {
        return Err(ModelError::DegenerateData(format!(
            "hyper-priors need at least 2 estimates, got {}",
            values.len()
        )));
    }
    if rule.psi <= 1.0 || rule.sigma2_mu_shape <= 1.0 || rule.xi_shape <= 0.0 {
        return Err(ModelError::Config(
            "data-dependent rule needs psi > 1, sigma2_mu_shape > 1, xi_shape > 0".into(),
        ));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let range = hi - lo;
    if !(range > 0.0) || !range.is_finite() {
        return Err(ModelError::DegenerateData("estimates have zero range".into()));
    }
    Ok(BaseHyperPrior {
        phi_mean: mean,
        phi_var: range * range,
        sigma2_mu_shape: rule.sigma2_mu_shape,
        sigma2_mu_scale: var * (rule.sigma2_mu_shape - 1.0),
        psi: rule.psi,
        xi_shape: rule.xi_shape,
        xi_rate: rule.xi_shape * (rule.psi - 1.0) / var,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    #[test]
    fn zero_range_is_degenerate() {
        assert!(matches!(
            data_dependent_hyperpriors(&[0.0; 4], &DataDependentRule::default()),
            Err(ModelError::DegenerateData(_))
        ));
        assert!(data_dependent_hyperpriors(&[1.0], &DataDependentRule::default()).is_err());
    }

    #[test]
    fn symmetric_center() {
        let h = data_dependent_hyperpriors(&[-1.0, 1.0], &DataDependentRule::default()).unwrap();
        assert_eq!(h.phi_mean, 0.0);
        assert_eq!(h.phi_var, 4.0);
    }

    #[test]
    fn implied_prior_mean_of_tau2_by_quadrature() {
        // sample variance 4
        let values = [-2.0, 2.0, -2.0, 2.0, 0.0, 0.0];
        let n = values.len() as f64;
        let var = values.iter().map(|v| v * v).sum::<f64>() / (n - 1.0);
        let values: Vec<f64> = values.iter().map(|v| v * (4.0 / var).sqrt()).collect();
        let h = data_dependent_hyperpriors(&values, &DataDependentRule::default()).unwrap();
        // E[tau²] = E_xi[ E[1/p | xi] ], p ~ Gamma(psi, rate xi).
        // E[1/p | xi] = xi * int u^(psi-2) e^-u du / int u^(psi-1) e^-u du.
        let psi = h.psi;
        let ratio = simpson(|u| u.powf(psi - 2.0) * (-u).exp(), 0.0, 80.0, 400_000)
            / simpson(|u| u.powf(psi - 1.0) * (-u).exp(), 0.0, 80.0, 400_000);
        let (a, b) = (h.xi_shape, h.xi_rate);
        let gamma_pdf_unnorm = |x: f64| x.powf(a - 1.0) * (-b * x).exp();
        let upper = 80.0 / b;
        let e_xi = simpson(|x| x * gamma_pdf_unnorm(x), 0.0, upper, 400_000)
            / simpson(gamma_pdf_unnorm, 0.0, upper, 400_000);
        let numeric = ratio * e_xi;
        assert!((numeric - 4.0).abs() < 1e-9, "{numeric}");
        assert!((h.prior_mean_tau2() - 4.0).abs() < 1e-9);
        // sigma²_mu prior mean also matches: scale / (shape - 1)
        assert!((h.sigma2_mu_scale / (h.sigma2_mu_shape - 1.0) - 4.0).abs() < 1e-9);
    }
}
