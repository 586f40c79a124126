//! One Metropolis-within-Gibbs chain over latent effects, DP layers and the
//! spline regression block.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::dist;
use super::dp::{DpState, LayerSpec};
use super::{SamplerConfig, SamplerError, Trace};
use crate::model::{
    self, data_dependent_hyperpriors, default_knots, BasePrior, CandidateTerm, DatasetView,
    KnotRule, KnotSource, ModelError, ModelSpec, SecondStage, SplineState, T1Update,
};

const MIN_STEP: f64 = 1e-6;

/// Model and data resolved for sampling: priors, knots and layer membership
/// are fixed here, before any chain starts.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub(crate) view: DatasetView,
    pub(crate) spec: ModelSpec,
    pub(crate) layers: Vec<LayerSpec>,
    pub(crate) knots: Vec<Vec<f64>>,
    /// Trials whose clinical row enters the regression block.
    pub(crate) regression_rows: Vec<usize>,
    pub(crate) columns: Vec<String>,
    trace: Trace,
}

impl Prepared {
    pub fn new(spec: &ModelSpec, view: &DatasetView, config: &SamplerConfig) -> Result<Self, SamplerError> {
        spec.validate()?;
        config.validate()?;
        let n = view.n_trials();
        if n == 0 {
            return Err(SamplerError::Config("view has no trials".into()));
        }
        let null = spec.mode.is_null();
        let truncation = match spec.first_stage {
            model::FirstStage::SingleNormal => 1,
            model::FirstStage::DpMixture => config.truncation_for(n),
        };
        if truncation > 1 && truncation < n {
            return Err(SamplerError::Config(format!(
                "DP truncation {truncation} is below the number of trials {n}"
            )));
        }
        let clinical_values: Vec<f64> = view.clinical.iter().flatten().map(|o| o.effect).collect();
        let resolve_prior = |values: &[f64]| -> Result<model::BaseHyperPrior, ModelError> {
            match &spec.priors.base {
                BasePrior::Explicit(p) => {
                    p.validate()?;
                    Ok(p.clone())
                }
                BasePrior::DataDependent(rule) => data_dependent_hyperpriors(values, rule),
            }
        };
        let mut layers = Vec::new();
        let mut knots = Vec::new();
        if null {
            let members: Vec<usize> = (0..n).filter(|&j| view.clinical[j].is_some()).collect();
            let predictive = (0..n).filter(|&j| view.clinical[j].is_none()).collect();
            layers.push(LayerSpec {
                name: crate::data::CLINICAL.to_string(),
                prior: resolve_prior(&clinical_values)?,
                members,
                predictive,
                truncation,
                omega_upper: n as f64,
                fixed_component: spec.fixed.dp_component,
                fixed_omega: spec.fixed.omega,
            });
        } else {
            for (k, name) in view.candidates.iter().enumerate() {
                let values: Vec<f64> = view.markers[k].iter().flatten().map(|o| o.effect).collect();
                let members: Vec<usize> = (0..n)
                    .filter(|&j| view.markers[k][j].is_some() || view.clinical[j].is_some())
                    .collect();
                let predictive = (0..n).filter(|j| !members.contains(j)).collect();
                layers.push(LayerSpec {
                    name: name.clone(),
                    prior: resolve_prior(&values)?,
                    members,
                    predictive,
                    truncation,
                    omega_upper: n as f64,
                    fixed_component: spec.fixed.dp_component,
                    fixed_omega: spec.fixed.omega,
                });
                let kn = match (&spec.second_stage, &spec.knots) {
                    (SecondStage::Linear, _) => Vec::new(),
                    (SecondStage::Spline, KnotRule::Explicit(r)) => r.clone(),
                    (SecondStage::Spline, KnotRule::Percentiles { probs, source }) => {
                        let src = match source {
                            KnotSource::Candidate => &values,
                            KnotSource::Clinical => &clinical_values,
                        };
                        default_knots(src, probs)?
                    }
                };
                knots.push(kn);
            }
        }
        let regression_rows = if null {
            Vec::new()
        } else {
            (0..n).filter(|&j| view.clinical[j].is_some()).collect()
        };
        let mut p = Prepared {
            view: view.clone(),
            spec: spec.clone(),
            layers,
            knots,
            regression_rows,
            columns: Vec::new(),
            trace: config.trace,
        };
        p.columns = p.column_names();
        Ok(p)
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn view(&self) -> &DatasetView {
        &self.view
    }

    fn is_null(&self) -> bool {
        self.spec.mode.is_null()
    }

    fn column_names(&self) -> Vec<String> {
        let v = &self.view;
        let mut c: Vec<String> = v.trials.iter().map(|t| format!("t2[{t}]")).collect();
        if !self.is_null() {
            for k in &v.candidates {
                c.extend(v.trials.iter().map(|t| format!("t1[{k}][{t}]")));
            }
            c.push("beta0".into());
            for (k, name) in v.candidates.iter().enumerate() {
                c.push(format!("beta1[{name}]"));
                c.extend((0..self.knots[k].len()).map(|m| format!("b[{name}][{m}]")));
                if !self.knots[k].is_empty() {
                    c.push(format!("kappa2_b[{name}]"));
                }
            }
            c.push("sigma2_eps".into());
        }
        for l in &self.layers {
            for p in ["phi", "sigma2_mu", "xi"] {
                c.push(format!("{p}[{}]", l.name));
            }
            // a single component has no concentration or clustering
            if l.truncation > 1 {
                c.push(format!("omega[{}]", l.name));
                c.push(format!("n_clusters[{}]", l.name));
            }
        }
        if self.trace == Trace::Full {
            for l in &self.layers {
                for t in &v.trials {
                    c.push(format!("cluster[{}][{t}]", l.name));
                    c.push(format!("mu[{}][{t}]", l.name));
                    c.push(format!("tau2[{}][{t}]", l.name));
                }
            }
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Phase {
    Adapt,
    Sample,
}

/// Mutable state of one chain.
#[derive(Debug, Clone)]
pub struct Chain {
    pub(crate) t1: Vec<Vec<f64>>,
    pub(crate) t2: Vec<f64>,
    pub(crate) layers: Vec<DpState>,
    pub(crate) spline: SplineState,
    t1_step: Vec<Vec<f64>>,
    t1_accepted: Vec<Vec<usize>>,
    pub(crate) t1_proposed: usize,
    pub(crate) t1_accept_total: usize,
    pub(crate) t1_proposal_total: usize,
}

impl Chain {
    pub fn init<R: Rng + ?Sized>(p: &Prepared, rng: &mut R) -> Self {
        let v = &p.view;
        let n = v.n_trials();
        let fx = &p.spec.fixed;
        let layers: Vec<DpState> = p.layers.iter().map(|l| DpState::init(l, n, rng)).collect();
        let clinical: Vec<f64> = v.clinical.iter().flatten().map(|o| o.effect).collect();
        let clinical_mean = if clinical.is_empty() {
            0.0
        } else {
            clinical.iter().sum::<f64>() / clinical.len() as f64
        };
        let mut t1 = Vec::new();
        let mut t1_step = Vec::new();
        if !p.is_null() {
            for (k, rows) in v.markers.iter().enumerate() {
                let prior = &p.layers[k].prior;
                let spread = (prior.prior_mean_tau2()).sqrt().max(1e-3);
                t1.push(
                    rows.iter()
                        .map(|o| match o {
                            Some(o) => dist::normal(rng, o.effect, 0.5 * o.se),
                            None => dist::normal(rng, prior.phi_mean, 0.5 * spread),
                        })
                        .collect::<Vec<f64>>(),
                );
                t1_step.push(
                    rows.iter()
                        .map(|o| o.map_or(spread, |o| o.se.min(spread).max(1e-3)))
                        .collect::<Vec<f64>>(),
                );
            }
        }
        let t2: Vec<f64> = v
            .clinical
            .iter()
            .map(|o| match o {
                Some(o) => dist::normal(rng, o.effect, 0.5 * o.se),
                None => clinical_mean,
            })
            .collect();
        let var2 = if clinical.len() > 1 {
            clinical.iter().map(|x| (x - clinical_mean).powi(2)).sum::<f64>() / (clinical.len() - 1) as f64
        } else {
            1.0
        };
        let terms = p
            .knots
            .iter()
            .map(|kn| CandidateTerm {
                beta1: fx.beta1.unwrap_or(0.0),
                b: vec![fx.spline_b.unwrap_or(0.0); kn.len()],
                knots: kn.clone(),
                kappa2_b: fx.kappa2_b.unwrap_or(1.0),
            })
            .collect();
        let spline = SplineState {
            beta0: fx.beta0.unwrap_or(clinical_mean),
            terms,
            sigma2_eps: fx.sigma2_eps.unwrap_or(var2.max(1e-4)),
        };
        let k = t1.len();
        Chain {
            t1_accepted: vec![vec![0; n]; k],
            t1,
            t2,
            layers,
            spline,
            t1_step,
            t1_proposed: 0,
            t1_accept_total: 0,
            t1_proposal_total: 0,
        }
    }

    /// One full sweep of the update scheme.
    pub(crate) fn sweep<R: Rng + ?Sized>(&mut self, p: &Prepared, rng: &mut R, phase: Phase) {
        if p.is_null() {
            let layer = &p.layers[0];
            self.layers[0].update(layer, &self.t2, rng);
            self.layers[0].draw_predictive(layer, &mut self.t2, rng);
            self.update_t2_null(p, rng);
            return;
        }
        for (k, layer) in p.layers.iter().enumerate() {
            self.layers[k].update(layer, &self.t1[k], rng);
            self.layers[k].draw_predictive(layer, &mut self.t1[k], rng);
        }
        match p.spec.t1_update {
            T1Update::Metropolis => self.update_t1_metropolis(p, rng),
            T1Update::Conjugate => self.update_t1_conjugate(p, rng),
        }
        self.update_regression(p, rng);
        self.update_variances(p, rng);
        self.update_t2(p, rng);
        if phase == Phase::Sample {
            self.t1_proposal_total += self.t1_proposed;
        }
        self.t1_proposed = 0;
    }

    /// Sum of every term of the mean of T2 in trial `j` except candidate `skip`.
    #[inline]
    fn mean_without(&self, j: usize, skip: usize) -> f64 {
        let mut m = self.spline.beta0;
        for (k, term) in self.spline.terms.iter().enumerate() {
            if k != skip {
                m += term.eval(self.t1[k][j]);
            }
        }
        m
    }

    #[inline]
    fn mean_t2(&self, j: usize) -> f64 {
        self.mean_without(j, usize::MAX)
    }

    fn t1_log_target(&self, p: &Prepared, k: usize, j: usize, x: f64, rest: f64, paired: bool) -> f64 {
        let mut lp = self.layers[k].component_logpdf(j, x);
        let v = &p.view;
        if let Some(o) = v.markers[k][j] {
            if paired {
                let c = v.clinical[j].expect("paired row has clinical");
                lp += model::bivariate_normal_logpdf(o.effect, c.effect, x, self.t2[j], o.se, c.se, o.rho.unwrap_or(0.0));
            } else {
                let z = (o.effect - x) / o.se;
                lp -= 0.5 * z * z;
            }
        }
        if v.clinical[j].is_some() {
            let d = self.t2[j] - rest - self.spline.terms[k].eval(x);
            lp -= 0.5 * d * d / self.spline.sigma2_eps;
        }
        lp
    }

    fn update_t1_metropolis<R: Rng + ?Sized>(&mut self, p: &Prepared, rng: &mut R) {
        for (k, layer) in p.layers.iter().enumerate() {
            for &j in &layer.members {
                let paired = p.view.correlated_candidate(j) == Some(k);
                let rest = self.mean_without(j, k);
                let x = self.t1[k][j];
                let prop = x + self.t1_step[k][j] * dist::normal(rng, 0.0, 1.0);
                let log_ratio = self.t1_log_target(p, k, j, prop, rest, paired)
                    - self.t1_log_target(p, k, j, x, rest, paired);
                self.t1_proposed += 1;
                if rng.random::<f64>().ln() < log_ratio {
                    self.t1[k][j] = prop;
                    self.t1_accepted[k][j] += 1;
                    self.t1_accept_total += 1;
                }
            }
        }
    }

    fn update_t1_conjugate<R: Rng + ?Sized>(&mut self, p: &Prepared, rng: &mut R) {
        let v = &p.view;
        for (k, layer) in p.layers.iter().enumerate() {
            for &j in &layer.members {
                let (mu, tau2) = self.layers[k].component_of(j);
                let mut prec = 1.0 / tau2;
                let mut num = mu / tau2;
                if let Some(o) = v.markers[k][j] {
                    let (y, var) = match (o.rho, v.clinical[j]) {
                        (Some(r), Some(c)) if v.correlated_candidate(j) == Some(k) => (
                            o.effect - r * o.se / c.se * (c.effect - self.t2[j]),
                            o.se * o.se * (1.0 - r * r),
                        ),
                        _ => (o.effect, o.se * o.se),
                    };
                    prec += 1.0 / var;
                    num += y / var;
                }
                if v.clinical[j].is_some() {
                    let beta1 = self.spline.terms[k].beta1;
                    let resid = self.t2[j] - self.mean_without(j, k);
                    prec += beta1 * beta1 / self.spline.sigma2_eps;
                    num += beta1 * resid / self.spline.sigma2_eps;
                }
                self.t1[k][j] = dist::normal(rng, num / prec, prec.recip().sqrt());
            }
        }
    }

    /// Joint normal draw of the free coefficients among beta0, beta1_k, b_mk.
    fn update_regression<R: Rng + ?Sized>(&mut self, p: &Prepared, rng: &mut R) {
        let fx = &p.spec.fixed;
        let free_beta0 = fx.beta0.is_none();
        let free_beta1 = fx.beta1.is_none();
        let free_b = fx.spline_b.is_none();
        // column layout
        let mut cols: Vec<(usize, Option<usize>)> = Vec::new(); // (candidate, knot) ; usize::MAX = intercept
        if free_beta0 {
            cols.push((usize::MAX, None));
        }
        for (k, term) in self.spline.terms.iter().enumerate() {
            if free_beta1 {
                cols.push((k, None));
            }
            if free_b {
                cols.extend((0..term.knots.len()).map(|m| (k, Some(m))));
            }
        }
        let dim = cols.len();
        if dim == 0 {
            return;
        }
        let s2 = self.spline.sigma2_eps;
        let mut a = DMatrix::<f64>::zeros(dim, dim);
        let mut c = DVector::<f64>::zeros(dim);
        let mut row = vec![0.0; dim];
        for &j in &p.regression_rows {
            // fixed part of the mean
            let mut fixed = if free_beta0 { 0.0 } else { self.spline.beta0 };
            for (k, term) in self.spline.terms.iter().enumerate() {
                let t = self.t1[k][j];
                if !free_beta1 {
                    fixed += term.beta1 * t;
                }
                if !free_b {
                    fixed += term.b.iter().zip(&term.knots).map(|(b, r)| b * (t - r).abs()).sum::<f64>();
                }
            }
            for (i, &(k, m)) in cols.iter().enumerate() {
                row[i] = match (k, m) {
                    (usize::MAX, _) => 1.0,
                    (k, None) => self.t1[k][j],
                    (k, Some(m)) => (self.t1[k][j] - self.spline.terms[k].knots[m]).abs(),
                };
            }
            let y = self.t2[j] - fixed;
            for r in 0..dim {
                c[r] += row[r] * y / s2;
                for q in 0..=r {
                    a[(r, q)] += row[r] * row[q] / s2;
                }
            }
        }
        for r in 0..dim {
            for q in 0..r {
                a[(q, r)] = a[(r, q)];
            }
            let (k, m) = cols[r];
            a[(r, r)] += match m {
                Some(_) => 1.0 / self.spline.terms[k].kappa2_b,
                None => p.spec.priors.beta_precision,
            };
        }
        let chol = match a.cholesky() {
            Some(ch) => ch,
            None => return,
        };
        let mean = chol.solve(&c);
        let z = DVector::from_iterator(dim, (0..dim).map(|_| dist::normal(rng, 0.0, 1.0)));
        let lt = chol.l().transpose();
        let noise = lt.solve_upper_triangular(&z).unwrap_or_else(|| DVector::zeros(dim));
        let theta = mean + noise;
        for (i, &(k, m)) in cols.iter().enumerate() {
            match (k, m) {
                (usize::MAX, _) => self.spline.beta0 = theta[i],
                (k, None) => self.spline.terms[k].beta1 = theta[i],
                (k, Some(m)) => self.spline.terms[k].b[m] = theta[i],
            }
        }
    }

    fn update_variances<R: Rng + ?Sized>(&mut self, p: &Prepared, rng: &mut R) {
        let fx = &p.spec.fixed;
        let pr = &p.spec.priors;
        if fx.kappa2_b.is_none() && fx.spline_b.is_none() {
            for term in &mut self.spline.terms {
                if term.b.is_empty() {
                    continue;
                }
                let ss: f64 = term.b.iter().map(|b| b * b).sum();
                term.kappa2_b = dist::inv_gamma(rng, pr.kappa2_shape + 0.5 * term.b.len() as f64, pr.kappa2_scale + 0.5 * ss);
            }
        }
        if fx.sigma2_eps.is_none() {
            let ssr: f64 = p
                .regression_rows
                .iter()
                .map(|&j| (self.t2[j] - self.mean_t2(j)).powi(2))
                .sum();
            let n = p.regression_rows.len() as f64;
            self.spline.sigma2_eps =
                dist::inv_gamma(rng, pr.sigma2_eps_shape + 0.5 * n, pr.sigma2_eps_scale + 0.5 * ssr);
        }
    }

    fn update_t2<R: Rng + ?Sized>(&mut self, p: &Prepared, rng: &mut R) {
        let v = &p.view;
        let s2 = self.spline.sigma2_eps;
        for j in 0..v.n_trials() {
            let m = self.mean_t2(j);
            match v.clinical[j] {
                Some(c) => {
                    let (y, var) = match v.correlated_candidate(j) {
                        Some(k) => {
                            let o = v.markers[k][j].expect("paired candidate row");
                            let r = o.rho.unwrap_or(0.0);
                            (c.effect - r * c.se / o.se * (o.effect - self.t1[k][j]), c.se * c.se * (1.0 - r * r))
                        }
                        None => (c.effect, c.se * c.se),
                    };
                    let prec = 1.0 / s2 + 1.0 / var;
                    let mean = (m / s2 + y / var) / prec;
                    self.t2[j] = dist::normal(rng, mean, prec.recip().sqrt());
                }
                None => self.t2[j] = dist::normal(rng, m, s2.sqrt()),
            }
        }
    }

    fn update_t2_null<R: Rng + ?Sized>(&mut self, p: &Prepared, rng: &mut R) {
        let layer = &p.layers[0];
        for &j in &layer.members {
            let c = p.view.clinical[j].expect("null members have clinical rows");
            let (mu, tau2) = self.layers[0].component_of(j);
            let var = c.se * c.se;
            let prec = 1.0 / tau2 + 1.0 / var;
            let mean = (mu / tau2 + c.effect / var) / prec;
            self.t2[j] = dist::normal(rng, mean, prec.recip().sqrt());
        }
    }

    /// Adjust proposal scales toward 20-50% acceptance from the counts of
    /// the last `window` sweeps.
    pub(crate) fn adapt(&mut self, p: &Prepared, window: usize) {
        let w = window as f64;
        for (k, layer) in p.layers.iter().enumerate() {
            if self.t1_step.is_empty() {
                break;
            }
            for &j in &layer.members {
                let rate = self.t1_accepted[k][j] as f64 / w;
                let s = &mut self.t1_step[k][j];
                if rate < 0.2 {
                    *s = (*s * 0.7).max(MIN_STEP);
                } else if rate > 0.5 {
                    *s *= 1.4;
                }
                self.t1_accepted[k][j] = 0;
            }
        }
        for (state, layer) in self.layers.iter_mut().zip(&p.layers) {
            let rate = state.omega_accepted as f64 / w;
            if rate < 0.2 {
                state.omega_step = (state.omega_step * 0.7).max(MIN_STEP);
            } else if rate > 0.5 {
                state.omega_step = (state.omega_step * 1.4).min(layer.omega_upper.max(1.0));
            }
            state.omega_accepted = 0;
        }
    }

    pub(crate) fn reset_counters(&mut self) {
        for row in &mut self.t1_accepted {
            row.iter_mut().for_each(|a| *a = 0);
        }
        for s in &mut self.layers {
            s.omega_accepted = 0;
        }
        self.t1_accept_total = 0;
        self.t1_proposal_total = 0;
    }

    /// Current values in column order.
    pub(crate) fn record(&self, p: &Prepared, out: &mut Vec<f64>) -> Result<(), SamplerError> {
        let start = out.len();
        out.extend_from_slice(&self.t2);
        if !p.is_null() {
            for row in &self.t1 {
                out.extend_from_slice(row);
            }
            out.push(self.spline.beta0);
            for term in &self.spline.terms {
                out.push(term.beta1);
                out.extend_from_slice(&term.b);
                if !term.knots.is_empty() {
                    out.push(term.kappa2_b);
                }
            }
            out.push(self.spline.sigma2_eps);
        }
        for (s, l) in self.layers.iter().zip(&p.layers) {
            out.extend_from_slice(&[s.phi, s.sigma2_mu, s.xi]);
            if l.truncation > 1 {
                out.extend_from_slice(&[s.omega, s.n_clusters(l) as f64]);
            }
        }
        if p.trace == Trace::Full {
            for s in &self.layers {
                for j in 0..p.view.n_trials() {
                    let (mu, tau2) = s.component_of(j);
                    out.extend_from_slice(&[s.assign[j] as f64, mu, tau2]);
                }
            }
        }
        debug_assert_eq!(out.len() - start, p.columns.len());
        if let Some(i) = out[start..].iter().position(|v| !v.is_finite()) {
            return Err(SamplerError::NumericalFailure(format!(
                "non-finite value in {}",
                p.columns[i]
            )));
        }
        Ok(())
    }
}
