//! Quantile binning of continuous covariates into Low/(Medium/)High items.

use serde::{Deserialize, Serialize};

use crate::data::{ColumnData, ColumnKind, Dataset};
use crate::error::{Error, Result};
use crate::stats;

/// One `(column, level)` item of a transaction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Item {
    pub column: usize,
    pub level: usize,
}

#[derive(Clone, Debug)]
pub struct DiscretizedView {
    bins: usize,
    n_rows: usize,
    names: Vec<String>,
    labels: Vec<Vec<String>>,
    codes: Vec<Vec<usize>>,
    cutpoints: Vec<Option<Vec<f64>>>,
    representatives: Vec<Vec<f64>>,
}

pub fn bin_labels(bins: usize) -> &'static [&'static str] {
    match bins {
        2 => &["Low", "High"],
        _ => &["Low", "Medium", "High"],
    }
}

/// Splits each continuous column at its empirical type-7 quantiles; values
/// equal to a cutpoint fall in the lower bin. Categorical columns pass
/// through with their declared levels.
pub fn discretize(ds: &Dataset, bins: usize) -> Result<DiscretizedView> {
    if bins != 2 && bins != 3 {
        return Err(Error::InvalidBins(bins));
    }
    let m = ds.n_rows();
    let mut labels = Vec::with_capacity(ds.n_columns());
    let mut codes = Vec::with_capacity(ds.n_columns());
    let mut cutpoints = Vec::with_capacity(ds.n_columns());
    let mut representatives = Vec::with_capacity(ds.n_columns());

    for (j, spec) in ds.columns().iter().enumerate() {
        match (ds.column(j), &spec.kind) {
            (ColumnData::Continuous(v), _) => {
                let mut sorted = v.clone();
                sorted.sort_by(f64::total_cmp);
                let cuts: Vec<f64> = (1..bins)
                    .map(|b| stats::quantile_sorted(&sorted, b as f64 / bins as f64))
                    .collect();
                let col_codes: Vec<usize> = v
                    .iter()
                    .map(|&x| cuts.iter().take_while(|&&c| x > c).count())
                    .collect();
                let reps = (0..bins)
                    .map(|b| {
                        let members: Vec<f64> = v
                            .iter()
                            .zip(&col_codes)
                            .filter(|(_, &c)| c == b)
                            .map(|(&x, _)| x)
                            .collect();
                        if members.is_empty() {
                            // empty bin under heavy ties: nearest cutpoint
                            cuts[b.min(cuts.len() - 1)]
                        } else {
                            stats::median(&members)
                        }
                    })
                    .collect();
                labels.push(bin_labels(bins).iter().map(|s| s.to_string()).collect());
                codes.push(col_codes);
                cutpoints.push(Some(cuts));
                representatives.push(reps);
            }
            (ColumnData::Categorical(v), ColumnKind::Categorical { levels }) => {
                labels.push(levels.clone());
                codes.push(v.clone());
                cutpoints.push(None);
                representatives.push(Vec::new());
            }
            _ => unreachable!("dataset columns conform to their specs"),
        }
    }

    Ok(DiscretizedView {
        bins,
        n_rows: m,
        names: ds.columns().iter().map(|c| c.name.clone()).collect(),
        labels,
        codes,
        cutpoints,
        representatives,
    })
}

impl DiscretizedView {
    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_columns(&self) -> usize {
        self.codes.len()
    }

    pub fn column_name(&self, col: usize) -> &str {
        &self.names[col]
    }

    pub fn n_levels(&self, col: usize) -> usize {
        self.labels[col].len()
    }

    pub fn level(&self, row: usize, col: usize) -> usize {
        self.codes[col][row]
    }

    pub fn codes(&self, col: usize) -> &[usize] {
        &self.codes[col]
    }

    pub fn level_label(&self, col: usize, level: usize) -> &str {
        &self.labels[col][level]
    }

    pub fn item_label(&self, item: Item) -> String {
        format!("{}={}", self.names[item.column], self.labels[item.column][item.level])
    }

    pub fn cutpoints(&self, col: usize) -> Option<&[f64]> {
        self.cutpoints[col].as_deref()
    }

    /// Within-bin median (on the dataset's scale) standing in for a binned
    /// level of a continuous column; `None` for categorical columns.
    pub fn representative(&self, col: usize, level: usize) -> Option<f64> {
        self.representatives[col].get(level).copied()
    }

    /// Items of one row, in column order.
    pub fn row_items(&self, row: usize) -> impl Iterator<Item = Item> + '_ {
        self.codes.iter().enumerate().map(move |(column, c)| Item {
            column,
            level: c[row],
        })
    }
}
