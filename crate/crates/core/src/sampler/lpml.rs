//! Log pseudo-marginal likelihood from retained states.

use serde::{Deserialize, Serialize};

use super::PosteriorDraws;
use crate::data::{Dataset, Response};
use crate::error::{Error, Result};
use crate::stats::{ln_normal_pdf, logsumexp, normal_interval_prob};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpmlReport {
    pub lpml: f64,
    pub log_cpo: Vec<f64>,
    /// Units whose CPO could not be evaluated (a zero likelihood in some draw).
    pub non_finite: Vec<usize>,
    pub mean_clusters: f64,
}

/// `log CPO_i = -log mean_t 1/f(y_i | state_t)` with `f` the Gaussian density
/// for continuous responses and the grade interval probability for ordinal
/// ones. `ds` must be the dataset the chain was fitted on.
pub fn compute_lpml(draws: &PosteriorDraws, ds: &Dataset) -> Result<LpmlReport> {
    if draws.is_empty() {
        return Err(Error::Empty("no retained draws"));
    }
    if draws.n_units != ds.n_rows() {
        return Err(Error::LengthMismatch(format!(
            "draws describe {} units, dataset has {}",
            draws.n_units,
            ds.n_rows()
        )));
    }
    let cuts = &draws.config.prior;
    let t = draws.len() as f64;
    let mut log_cpo = Vec::with_capacity(ds.n_rows());
    let mut non_finite = Vec::new();
    let mut neg = vec![0.0; draws.len()];
    for i in 0..ds.n_rows() {
        for (k, s) in draws.states.iter().enumerate() {
            let p = s.params[s.label(i)];
            let log_f = match ds.response() {
                Response::Continuous(y) => ln_normal_pdf(y[i], p.mu, p.sigma),
                Response::Ordinal { grades, .. } => {
                    let (lo, hi) = cuts.grade_interval(grades[i]);
                    normal_interval_prob(lo, hi, p.mu, p.sigma).ln()
                }
            };
            neg[k] = -log_f;
        }
        let v = -(logsumexp(&neg) - t.ln());
        if !v.is_finite() {
            non_finite.push(i);
        }
        log_cpo.push(v);
    }
    let lpml = if non_finite.is_empty() {
        log_cpo.iter().sum()
    } else {
        f64::NEG_INFINITY
    };
    Ok(LpmlReport {
        lpml,
        log_cpo,
        non_finite,
        mean_clusters: draws.mean_clusters(),
    })
}
