//! Truncated stick-breaking Dirichlet process mixture of normals for one
//! vector of true effects.

use rand::Rng;

use super::dist;
use crate::model::BaseHyperPrior;

const MAX_STICK: f64 = 1.0 - 1e-12;

/// Static description of a layer: which trials it governs and its prior.
#[derive(Debug, Clone)]
pub(crate) struct LayerSpec {
    pub name: String,
    pub prior: BaseHyperPrior,
    /// Trials whose value is a latent member of the mixture.
    pub members: Vec<usize>,
    /// Trials drawn from the posterior predictive each sweep.
    pub predictive: Vec<usize>,
    pub truncation: usize,
    /// Upper bound of the uniform prior on omega (lower bound is 1).
    pub omega_upper: f64,
    pub fixed_component: Option<[f64; 2]>,
    pub fixed_omega: Option<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct DpState {
    /// Component index per trial (members and predictive draws).
    pub assign: Vec<usize>,
    pub mu: Vec<f64>,
    pub tau2: Vec<f64>,
    pub sticks: Vec<f64>,
    pub weights: Vec<f64>,
    pub omega: f64,
    pub phi: f64,
    pub sigma2_mu: f64,
    pub xi: f64,
    pub omega_step: f64,
    pub omega_accepted: usize,
    counts: Vec<usize>,
    logw: Vec<f64>,
    scratch: Vec<f64>,
}

impl DpState {
    pub fn init<R: Rng + ?Sized>(spec: &LayerSpec, n_trials: usize, rng: &mut R) -> Self {
        let l = spec.truncation;
        let p = &spec.prior;
        let omega = match spec.fixed_omega {
            Some(w) => w,
            None if spec.omega_upper > 1.0 => rng.random_range(1.0..spec.omega_upper),
            None => 1.0,
        };
        let mut s = DpState {
            assign: vec![0; n_trials],
            mu: vec![0.0; l],
            tau2: vec![1.0; l],
            sticks: vec![0.0; l],
            weights: vec![0.0; l],
            omega,
            phi: p.phi_mean,
            sigma2_mu: if p.sigma2_mu_shape > 1.0 {
                p.sigma2_mu_scale / (p.sigma2_mu_shape - 1.0)
            } else {
                p.sigma2_mu_scale
            },
            xi: p.xi_shape / p.xi_rate,
            omega_step: 0.5 * (spec.omega_upper - 1.0).max(0.1),
            omega_accepted: 0,
            counts: vec![0; l],
            logw: vec![0.0; l],
            scratch: Vec::with_capacity(l),
        };
        for c in 0..l {
            s.draw_from_base(c, spec, rng);
        }
        for c in 0..l {
            s.sticks[c] = if c + 1 == l { 1.0 } else { dist::beta(rng, 1.0, s.omega).min(MAX_STICK) };
        }
        s.refresh_weights();
        s
    }

    fn draw_from_base<R: Rng + ?Sized>(&mut self, c: usize, spec: &LayerSpec, rng: &mut R) {
        if let Some([m, v]) = spec.fixed_component {
            self.mu[c] = m;
            self.tau2[c] = v;
            return;
        }
        self.mu[c] = dist::normal(rng, self.phi, self.sigma2_mu.sqrt());
        self.tau2[c] = 1.0 / dist::gamma(rng, spec.prior.psi, self.xi);
    }

    fn refresh_weights(&mut self) {
        let mut remaining = 1.0;
        for c in 0..self.sticks.len() {
            self.weights[c] = self.sticks[c] * remaining;
            remaining *= 1.0 - self.sticks[c];
        }
    }

    /// Log prior density of value `x` under the component of trial `j`.
    #[inline]
    pub fn component_logpdf(&self, j: usize, x: f64) -> f64 {
        let c = self.assign[j];
        let d = x - self.mu[c];
        -0.5 * d * d / self.tau2[c]
    }

    #[inline]
    pub fn component_of(&self, j: usize) -> (f64, f64) {
        let c = self.assign[j];
        (self.mu[c], self.tau2[c])
    }

    pub fn n_clusters(&self, spec: &LayerSpec) -> usize {
        let mut seen = vec![false; self.mu.len()];
        for &j in &spec.members {
            seen[self.assign[j]] = true;
        }
        seen.iter().filter(|s| **s).count()
    }

    /// One Gibbs pass over assignments, components, hyper-parameters,
    /// sticks and concentration.
    pub fn update<R: Rng + ?Sized>(&mut self, spec: &LayerSpec, values: &[f64], rng: &mut R) {
        if spec.fixed_component.is_some() {
            return;
        }
        self.update_assignments(spec, values, rng);
        self.update_components(spec, values, rng);
        if spec.truncation > 1 {
            // omega | assignments with the sticks integrated out, then
            // sticks | assignments, omega: a joint draw of both
            if spec.fixed_omega.is_none() && spec.omega_upper > 1.0 {
                self.update_omega(spec, rng);
            }
            self.update_sticks(rng);
        }
    }

    fn update_assignments<R: Rng + ?Sized>(&mut self, spec: &LayerSpec, values: &[f64], rng: &mut R) {
        let l = spec.truncation;
        if l == 1 {
            for &j in &spec.members {
                self.assign[j] = 0;
            }
            return;
        }
        // per-component constants
        let mut consts: Vec<(f64, f64, f64)> = Vec::with_capacity(l);
        for c in 0..l {
            let lw = if self.weights[c] > 0.0 { self.weights[c].ln() } else { f64::NEG_INFINITY };
            consts.push((lw - 0.5 * self.tau2[c].ln(), self.mu[c], 1.0 / self.tau2[c]));
        }
        for &j in &spec.members {
            let x = values[j];
            for (c, &(k, m, p)) in consts.iter().enumerate() {
                let d = x - m;
                self.logw[c] = k - 0.5 * p * d * d;
            }
            self.assign[j] = dist::categorical_log(rng, &self.logw, &mut self.scratch);
        }
    }

    fn update_components<R: Rng + ?Sized>(&mut self, spec: &LayerSpec, values: &[f64], rng: &mut R) {
        let l = spec.truncation;
        let p = &spec.prior;
        self.counts.iter_mut().for_each(|c| *c = 0);
        let mut sums = vec![0.0; l];
        for &j in &spec.members {
            self.counts[self.assign[j]] += 1;
            sums[self.assign[j]] += values[j];
        }
        // occupied components: mu | tau2, then tau2 | mu
        for c in 0..l {
            let n = self.counts[c];
            if n == 0 {
                continue;
            }
            let prec = 1.0 / self.sigma2_mu + n as f64 / self.tau2[c];
            let mean = (self.phi / self.sigma2_mu + sums[c] / self.tau2[c]) / prec;
            self.mu[c] = dist::normal(rng, mean, prec.recip().sqrt());
            let ss: f64 = spec
                .members
                .iter()
                .filter(|&&j| self.assign[j] == c)
                .map(|&j| (values[j] - self.mu[c]).powi(2))
                .sum();
            self.tau2[c] = 1.0 / dist::gamma(rng, p.psi + 0.5 * n as f64, self.xi + 0.5 * ss);
        }
        // hyper-parameters given occupied components; empty ones are then
        // redrawn from the updated base measure
        let occupied: Vec<usize> = (0..l).filter(|&c| self.counts[c] > 0).collect();
        let n_occ = occupied.len() as f64;
        let sum_mu: f64 = occupied.iter().map(|&c| self.mu[c]).sum();
        let prec = 1.0 / p.phi_var + n_occ / self.sigma2_mu;
        let mean = (p.phi_mean / p.phi_var + sum_mu / self.sigma2_mu) / prec;
        self.phi = dist::normal(rng, mean, prec.recip().sqrt());
        let ss_mu: f64 = occupied.iter().map(|&c| (self.mu[c] - self.phi).powi(2)).sum();
        self.sigma2_mu = dist::inv_gamma(rng, p.sigma2_mu_shape + 0.5 * n_occ, p.sigma2_mu_scale + 0.5 * ss_mu);
        let sum_prec: f64 = occupied.iter().map(|&c| 1.0 / self.tau2[c]).sum();
        self.xi = dist::gamma(rng, p.xi_shape + n_occ * p.psi, p.xi_rate + sum_prec);
        for c in 0..l {
            if self.counts[c] == 0 {
                self.draw_from_base(c, spec, rng);
            }
        }
    }

    fn update_sticks<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let l = self.sticks.len();
        let mut tail: usize = self.counts.iter().sum();
        for c in 0..l {
            tail -= self.counts[c];
            self.sticks[c] = if c + 1 == l {
                1.0
            } else {
                dist::beta(rng, 1.0 + self.counts[c] as f64, self.omega + tail as f64).min(MAX_STICK)
            };
        }
        self.refresh_weights();
    }

    /// log p(assignments | omega) up to a constant, sticks integrated out:
    /// each stick c contributes omega / prod_{i=0}^{n_c} (omega + N_{>c} + i).
    fn omega_log_target(&self, omega: f64) -> f64 {
        let free = self.sticks.len() - 1;
        let mut tail: usize = self.counts.iter().sum();
        let mut out = 0.0;
        for c in 0..free {
            if tail == 0 {
                break;
            }
            let n = self.counts[c];
            tail -= n;
            out += omega.ln();
            for i in 0..=n {
                out -= (omega + (tail + i) as f64).ln();
            }
        }
        out
    }

    fn update_omega<R: Rng + ?Sized>(&mut self, spec: &LayerSpec, rng: &mut R) {
        let (lo, hi) = (1.0, spec.omega_upper);
        let mut prop = self.omega + self.omega_step * dist::normal(rng, 0.0, 1.0);
        // reflect into [lo, hi]
        for _ in 0..64 {
            if prop < lo {
                prop = 2.0 * lo - prop;
            } else if prop > hi {
                prop = 2.0 * hi - prop;
            } else {
                break;
            }
        }
        prop = prop.clamp(lo, hi);
        let log_ratio = self.omega_log_target(prop) - self.omega_log_target(self.omega);
        if rng.random::<f64>().ln() < log_ratio {
            self.omega = prop;
            self.omega_accepted += 1;
        }
    }

    /// Posterior predictive draws for the layer's predictive trials.
    pub fn draw_predictive<R: Rng + ?Sized>(&mut self, spec: &LayerSpec, values: &mut [f64], rng: &mut R) {
        for &j in &spec.predictive {
            let c = if spec.truncation == 1 || spec.fixed_component.is_some() {
                0
            } else {
                let u = rng.random::<f64>();
                let mut acc = 0.0;
                let mut pick = spec.truncation - 1;
                for (c, w) in self.weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        pick = c;
                        break;
                    }
                }
                pick
            };
            self.assign[j] = c;
            values[j] = dist::normal(rng, self.mu[c], self.tau2[c].sqrt());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn prior() -> BaseHyperPrior {
        BaseHyperPrior {
            phi_mean: 0.0,
            phi_var: 4.0,
            sigma2_mu_shape: 3.0,
            sigma2_mu_scale: 2.0,
            psi: 3.0,
            xi_shape: 2.0,
            xi_rate: 2.0,
        }
    }

    fn layer(members: Vec<usize>, truncation: usize, upper: f64) -> LayerSpec {
        LayerSpec {
            name: "x".into(),
            prior: prior(),
            members,
            predictive: vec![],
            truncation,
            omega_upper: upper,
            fixed_component: None,
            fixed_omega: None,
        }
    }

    #[test]
    fn weights_sum_to_one_and_separated_clusters_found() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let values: Vec<f64> = (0..30).map(|j| if j < 15 { -4.0 } else { 4.0 } + 0.01 * j as f64).collect();
        let spec = layer((0..30).collect(), 50, 30.0);
        let mut s = DpState::init(&spec, 30, &mut rng);
        for _ in 0..300 {
            s.update(&spec, &values, &mut rng);
            let total: f64 = s.weights.iter().sum();
            assert!((total - 1.0).abs() < 1e-9);
            assert!(s.omega >= 1.0 && s.omega <= 30.0);
            assert!(s.tau2.iter().all(|t| *t > 0.0));
        }
        assert_ne!(s.assign[0], s.assign[29]);
        assert_eq!(s.assign[0], s.assign[1]);
    }

    #[test]
    fn single_component_never_splits() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let values = vec![-3.0, 0.0, 3.0];
        let spec = layer(vec![0, 1, 2], 1, 3.0);
        let mut s = DpState::init(&spec, 3, &mut rng);
        for _ in 0..50 {
            s.update(&spec, &values, &mut rng);
        }
        assert_eq!(s.n_clusters(&spec), 1);
        assert_eq!(s.weights, vec![1.0]);
    }
}
