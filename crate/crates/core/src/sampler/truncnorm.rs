//! Truncated normal draws by inverse CDF, with an exponential-rejection
//! fallback once both bounds sit beyond the representable tail.

use rand::Rng;

use crate::stats::{norm_cdf, norm_quantile};

/// Draws from N(mu, sigma^2) restricted to `(lo, hi]`. Bounds may be infinite.
pub fn sample<R: Rng + ?Sized>(rng: &mut R, mu: f64, sigma: f64, lo: f64, hi: f64) -> f64 {
    debug_assert!(lo < hi);
    let a = (lo - mu) / sigma;
    let b = (hi - mu) / sigma;
    let x = if a > 0.0 {
        -standard(rng, -b, -a)
    } else {
        standard(rng, a, b)
    };
    (mu + sigma * x).clamp(lo.max(f64::MIN), hi.min(f64::MAX))
}

/// Standard normal on `(a, b)` with `a <= 0`.
fn standard<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    let pa = norm_cdf(a);
    let pb = norm_cdf(b);
    if pb > 1e-290 && pb - pa > pb * 1e-10 {
        let u = pa + rng.random::<f64>() * (pb - pa);
        return norm_quantile(u.clamp(f64::MIN_POSITIVE, 1.0)).clamp(a, b);
    }
    // Both bounds deep in the lower tail: sample the mirrored upper tail.
    -upper_tail(rng, -b, -a)
}

/// Standard normal on `(l, u)` with `l` large and positive.
fn upper_tail<R: Rng + ?Sized>(rng: &mut R, l: f64, u: f64) -> f64 {
    if u - l < 1.0 / l {
        loop {
            let z = l + rng.random::<f64>() * (u - l);
            if rng.random::<f64>() <= (0.5 * (l * l - z * z)).exp() {
                return z;
            }
        }
    }
    let rate = 0.5 * (l + (l * l + 4.0).sqrt());
    loop {
        let z = l - rng.random::<f64>().ln() / rate;
        if z >= u {
            continue;
        }
        if rng.random::<f64>() <= (-0.5 * (z - rate) * (z - rate)).exp() {
            return z;
        }
    }
}

/// Mean of N(mu, sigma^2) truncated to `(lo, hi)`.
pub fn truncated_mean(mu: f64, sigma: f64, lo: f64, hi: f64) -> f64 {
    let a = (lo - mu) / sigma;
    let b = (hi - mu) / sigma;
    let pdf = |x: f64| {
        if x.is_infinite() {
            0.0
        } else {
            (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
        }
    };
    let z = crate::stats::normal_interval_prob(lo, hi, mu, sigma);
    mu + sigma * (pdf(a) - pdf(b)) / z
}
