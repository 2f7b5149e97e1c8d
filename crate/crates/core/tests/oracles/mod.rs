//! Independent reference computations shared by the integration tests:
//! brute-force quadrature and exhaustive enumeration.
#![allow(dead_code)]

use std::f64::consts::PI;

use std::collections::BTreeMap;

use raid_core::discretize::Item;
use raid_core::rules::RuleConfig;
use statrs::function::gamma::ln_gamma;

/// Double-exponential quadrature of `f` over `[a, b]`, split into `pieces`
/// equal panels so narrow peaks are not missed.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, pieces: usize, tol: f64) -> f64 {
    let w = (b - a) / pieces as f64;
    (0..pieces)
        .map(|k| {
            let lo = a + w * k as f64;
            quadrature::double_exponential::integrate(&f, lo, lo + w, tol).integral
        })
        .sum()
}

fn ln_normal(x: f64, mu: f64, var: f64) -> f64 {
    -0.5 * (2.0 * PI * var).ln() - 0.5 * (x - mu) * (x - mu) / var
}

/// `log ∫∫ prod N(x_i | mu, s) N(mu | m0, k0 s) IG(s | nu0, kappa0) dmu ds`
/// by nested quadrature over `(log s, mu)`. `log_ref` only rescales the
/// integrand to order one and cancels in the result.
pub fn nig_log_marginal_quadrature(xs: &[f64], m0: f64, k0: f64, nu0: f64, kappa0: f64, log_ref: f64) -> f64 {
    let n = xs.len() as f64;
    let lam = 1.0 / k0 + n;
    let centre = (m0 / k0 + xs.iter().sum::<f64>()) / lam;
    let log_ig_norm = nu0 * kappa0.ln() - ln_gamma(nu0);
    let outer = |t: f64| {
        let s = t.exp();
        let log_s_part = log_ig_norm - (nu0 + 1.0) * t - kappa0 / s + t - log_ref;
        let sd = (s / lam).sqrt();
        let inner = |mu: f64| {
            let ll: f64 = xs.iter().map(|&x| ln_normal(x, mu, s)).sum();
            (ll + ln_normal(mu, m0, k0 * s) + log_s_part).exp()
        };
        integrate(inner, centre - 40.0 * sd, centre + 40.0 * sd, 4, 1e-16)
    };
    integrate(outer, -45.0, 45.0, 90, 1e-15).ln() + log_ref
}

/// `log ∫_0^A (1/A) ∫ N(mu | mu0, s0^2) prod N(y_i | mu, sigma^2) dmu dsigma`
/// by nested quadrature.
pub fn cluster_log_marginal_quadrature(ys: &[f64], mu0: f64, sigma0: f64, a: f64) -> f64 {
    let n = ys.len() as f64;
    let ybar = ys.iter().sum::<f64>() / n;
    let joint = |sigma: f64, mu: f64| -> f64 {
        ys.iter().map(|&y| ln_normal(y, mu, sigma * sigma)).sum::<f64>() + ln_normal(mu, mu0, sigma0 * sigma0) - a.ln()
    };
    // shift by the largest value on a coarse grid to keep the integrand near one
    let mut log_ref = f64::NEG_INFINITY;
    for i in 1..200 {
        let sigma = a * i as f64 / 200.0;
        for j in 0..=200 {
            let mu = ybar - 5.0 + 10.0 * j as f64 / 200.0;
            log_ref = log_ref.max(joint(sigma, mu));
        }
    }
    let outer = |sigma: f64| {
        if sigma <= 0.0 {
            return 0.0;
        }
        let prec = n / (sigma * sigma) + 1.0 / (sigma0 * sigma0);
        let centre = (n * ybar / (sigma * sigma) + mu0 / (sigma0 * sigma0)) / prec;
        let sd = prec.sqrt().recip();
        integrate(|mu| (joint(sigma, mu) - log_ref).exp(), centre - 40.0 * sd, centre + 40.0 * sd, 4, 1e-16)
    };
    integrate(outer, 0.0, a, 16, 1e-15).ln() + log_ref
}

/// Every set partition of `0..m` as restricted-growth label vectors.
pub fn set_partitions(m: usize) -> Vec<Vec<usize>> {
    fn rec(labels: &mut Vec<usize>, max: usize, m: usize, out: &mut Vec<Vec<usize>>) {
        if labels.len() == m {
            out.push(labels.clone());
            return;
        }
        let top = if labels.is_empty() { 0 } else { max + 1 };
        for l in 0..=top {
            labels.push(l);
            rec(labels, max.max(l), m, out);
            labels.pop();
        }
    }
    let mut out = Vec::new();
    if m > 0 {
        rec(&mut Vec::with_capacity(m), 0, m, &mut out);
    }
    out
}

/// Members of each block of a restricted-growth label vector.
pub fn blocks(labels: &[usize]) -> Vec<Vec<usize>> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut out = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        out[l].push(i);
    }
    out
}

/// Normalizes log weights to probabilities.
pub fn normalize(logw: &[f64]) -> Vec<f64> {
    let m = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[test]
fn bell_numbers() {
    let bell: Vec<usize> = (1..=7).map(|m| set_partitions(m).len()).collect();
    assert_eq!(bell, [1, 2, 5, 15, 52, 203, 877]);
}

/// `log` of the Polya-urn probability of a label sequence, the exact
/// Dirichlet-multinomial marginal.
pub fn urn_log_prob(sequence: &[usize], k: usize, a: f64) -> f64 {
    let mut counts = vec![0.0; k];
    let mut lp = 0.0;
    for (i, &c) in sequence.iter().enumerate() {
        lp += ((a + counts[c]) / (k as f64 * a + i as f64)).ln();
        counts[c] += 1.0;
    }
    lp
}

/// `log M + log (n - 1)!` by direct product, or zero for uniform cohesion.
pub fn dp_log_cohesion(mass: Option<f64>, n: usize) -> f64 {
    mass.map_or(0.0, |m| m.ln() + (1..n).map(|i| (i as f64).ln()).sum::<f64>())
}

/// Exact posterior over all set partitions of the units, for binary
/// covariates with Dirichlet similarity and a Gaussian response with fixed
/// `(mu0, sigma0)` and `sigma ~ U(0, A)`. With `y = None` the likelihood is
/// dropped and the result is the prior.
pub fn exact_partition_posterior(
    covariates: &[Vec<usize>],
    y: Option<&[f64]>,
    mass: Option<f64>,
    shape: f64,
    hyper: (f64, f64, f64),
) -> Vec<(Vec<usize>, f64)> {
    let m = covariates[0].len();
    let parts = set_partitions(m);
    let mut cache = std::collections::HashMap::new();
    let mut block_score = |members: &[usize]| -> f64 {
        *cache.entry(members.to_vec()).or_insert_with(|| {
            let mut s = dp_log_cohesion(mass, members.len());
            for col in covariates {
                let seq: Vec<usize> = members.iter().map(|&i| col[i]).collect();
                s += urn_log_prob(&seq, 2, shape);
            }
            if let Some(y) = y {
                let ys: Vec<f64> = members.iter().map(|&i| y[i]).collect();
                s += cluster_log_marginal_quadrature(&ys, hyper.0, hyper.1, hyper.2);
            }
            s
        })
    };
    let logw: Vec<f64> = parts.iter().map(|p| blocks(p).iter().map(|b| block_score(b)).sum()).collect();
    parts.into_iter().zip(normalize(&logw)).collect()
}

/// Every rule over binary columns: each itemset with one item per chosen
/// column, counted by scanning rows.
pub fn brute_force_rules(matrix: &[Vec<usize>], cfg: &RuleConfig) -> BTreeMap<(Vec<Item>, Item), (f64, f64)> {
    let n = matrix.len();
    let p = matrix[0].len();
    let count = |set: &[Item]| matrix.iter().filter(|r| set.iter().all(|it| r[it.column] == it.level)).count();
    let meets = |c: usize, d: usize, t: f64| c as f64 / d as f64 >= t - 1e-12;
    let mut out = BTreeMap::new();
    for mask in 0u32..(1 << p) {
        let cols: Vec<usize> = (0..p).filter(|c| mask >> c & 1 == 1).collect();
        if cols.len() < 2 || cols.len() > cfg.max_order {
            continue;
        }
        for levels in 0u32..(1 << cols.len()) {
            let set: Vec<Item> = cols
                .iter()
                .enumerate()
                .map(|(k, &column)| Item { column, level: (levels >> k & 1) as usize })
                .collect();
            let c = count(&set);
            if c == 0 || !meets(c, n, cfg.min_support) {
                continue;
            }
            for x in 0..set.len() {
                let ante: Vec<Item> = set.iter().enumerate().filter(|&(y, _)| y != x).map(|(_, it)| *it).collect();
                let ca = count(&ante);
                if meets(c, ca, cfg.min_confidence) {
                    out.insert((ante, set[x]), (c as f64 / n as f64, c as f64 / ca as f64));
                }
            }
        }
    }
    out
}
