//! Gaussian kernel density curves of predictive samples on a shared grid.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

pub const GRID_POINTS: usize = 512;

/// Silverman's rule of thumb, `0.9 min(sd, IQR / 1.34) n^(-1/5)`, falling
/// back to whichever spread is positive.
pub fn silverman_bandwidth(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let sd = if xs.len() > 1 { stats::sample_sd(xs) } else { 0.0 };
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = stats::quantile_sorted(&sorted, 0.75) - stats::quantile_sorted(&sorted, 0.25);
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr / 1.34),
        (true, false) => sd,
        (false, true) => iqr / 1.34,
        (false, false) => {
            let m = xs.first().map_or(1.0, |x| x.abs());
            if m > 0.0 {
                0.1 * m
            } else {
                1.0
            }
        }
    };
    0.9 * spread * n.powf(-0.2)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub x: Vec<f64>,
    pub labels: Vec<String>,
    /// One density curve per group, evaluated at `x`.
    pub densities: Vec<Vec<f64>>,
}

/// Evaluates every group's KDE on one grid spanning all groups, padded by
/// three of the largest bandwidth on each side.
pub fn density_grid(labels: &[String], groups: &[Vec<f64>]) -> Result<DensityGrid> {
    if groups.is_empty() || groups.iter().any(Vec::is_empty) {
        return Err(Error::Empty("density groups must be nonempty"));
    }
    if labels.len() != groups.len() {
        return Err(Error::LengthMismatch("one label per group".into()));
    }
    let bw: Vec<f64> = groups.iter().map(|g| silverman_bandwidth(g)).collect();
    let h_max = bw.iter().copied().fold(0.0, f64::max);
    let lo = groups.iter().flatten().copied().fold(f64::INFINITY, f64::min) - 3.0 * h_max;
    let hi = groups.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h_max;
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;
    let x: Vec<f64> = (0..GRID_POINTS).map(|i| lo + step * i as f64).collect();
    let densities = groups
        .iter()
        .zip(&bw)
        .map(|(g, &h)| {
            let norm = 1.0 / (g.len() as f64 * h);
            x.iter()
                .map(|&t| {
                    norm * g
                        .iter()
                        .map(|&v| {
                            let u = (t - v) / h;
                            (-0.5 * u * u - stats::LN_SQRT_2PI).exp()
                        })
                        .sum::<f64>()
                })
                .collect()
        })
        .collect();
    Ok(DensityGrid {
        x,
        labels: labels.to_vec(),
        densities,
    })
}

impl DensityGrid {
    /// Delimited text: a header `x,<label>...` and one row per grid point.
    pub fn write_table<W: Write>(&self, w: W, delimiter: u8) -> Result<()> {
        let mut out = csv::WriterBuilder::new().delimiter(delimiter).from_writer(w);
        let mut header = vec!["x".to_string()];
        header.extend(self.labels.iter().cloned());
        out.write_record(&header)?;
        for (i, x) in self.x.iter().enumerate() {
            let mut row = vec![x.to_string()];
            row.extend(self.densities.iter().map(|d| d[i].to_string()));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}
