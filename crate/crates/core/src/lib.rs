//! Evaluation of trial-level general surrogates with a Bayesian
//! nonparametric hierarchical model and leave-one-trial-out prediction
//! error distributions.

pub mod data;
pub mod mcmc;
pub mod model;
pub mod cv;
pub mod baselines;
pub mod sim;
