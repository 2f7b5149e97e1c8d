//! Linear-model baseline: OLS on all main effects plus all two-way
//! interactions, with one F test (a t test when the block has one
//! coefficient) per interaction block.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::data::{ColumnData, Dataset, Response};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmPairTest {
    pub column_a: String,
    pub column_b: String,
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub detected: bool,
}

/// Treatment-coded main-effect columns of one covariate.
fn main_effects(ds: &Dataset, j: usize) -> Vec<(String, Vec<f64>)> {
    let name = &ds.spec(j).name;
    match ds.column(j) {
        ColumnData::Continuous(v) => vec![(name.clone(), v.clone())],
        ColumnData::Categorical(v) => {
            let k = ds.spec(j).n_levels().unwrap_or(0);
            (1..k)
                .map(|l| {
                    (
                        format!("{name}[{l}]"),
                        v.iter().map(|&x| if x == l { 1.0 } else { 0.0 }).collect(),
                    )
                })
                .collect()
        }
    }
}

/// Indices of columns that are (numerically) linear combinations of
/// earlier ones, by modified Gram-Schmidt.
fn aliased_columns(cols: &[Vec<f64>]) -> Vec<usize> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut out = Vec::new();
    for (c, col) in cols.iter().enumerate() {
        let norm0 = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut v = col.clone();
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm0 == 0.0 || norm <= 1e-9 * norm0 {
            out.push(c);
        } else {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    out
}

/// Upper tail of the F distribution.
fn f_sf(f: f64, d1: f64, d2: f64) -> f64 {
    if !(f > 0.0) {
        return 1.0;
    }
    beta_reg(0.5 * d2, 0.5 * d1, d2 / (d2 + d1 * f)).clamp(0.0, 1.0)
}

/// Fits the saturated two-way model and tests every interaction block;
/// pairs with `p < alpha` are marked detected.
pub fn lm_detect(ds: &Dataset, alpha: f64) -> Result<Vec<LmPairTest>> {
    let Response::Continuous(y) = ds.response() else {
        return Err(Error::Config("the linear-model baseline needs a continuous response".into()));
    };
    let n = ds.n_rows();
    let p = ds.n_columns();
    let mains: Vec<Vec<(String, Vec<f64>)>> = (0..p).map(|j| main_effects(ds, j)).collect();

    let mut names = vec!["(Intercept)".to_string()];
    let mut cols = vec![vec![1.0; n]];
    for m in &mains {
        for (name, v) in m {
            names.push(name.clone());
            cols.push(v.clone());
        }
    }
    let mut blocks = Vec::new();
    for a in 0..p {
        for b in a + 1..p {
            let start = cols.len();
            for (na, va) in &mains[a] {
                for (nb, vb) in &mains[b] {
                    names.push(format!("{na}:{nb}"));
                    cols.push(va.iter().zip(vb).map(|(x, y)| x * y).collect());
                }
            }
            blocks.push((a, b, start, cols.len()));
        }
    }
    let q = cols.len();
    if n <= q {
        return Err(Error::Config(format!("{n} rows cannot fit {q} coefficients")));
    }
    let aliased = aliased_columns(&cols);
    if !aliased.is_empty() {
        return Err(Error::SingularDesign(aliased.iter().map(|&c| names[c].clone()).collect()));
    }

    let x = DMatrix::from_fn(n, q, |i, j| cols[j][i]);
    let yv = DVector::from_column_slice(y);
    let xtx = x.transpose() * &x;
    let chol = xtx
        .cholesky()
        .ok_or_else(|| Error::SingularDesign(vec!["X'X is not positive definite".into()]))?;
    let beta = chol.solve(&(x.transpose() * &yv));
    let resid = &yv - &x * &beta;
    let df_resid = (n - q) as f64;
    let s2 = resid.norm_squared() / df_resid;
    let inv = chol.inverse();

    let mut out = Vec::with_capacity(blocks.len());
    for (a, b, start, end) in blocks {
        let k = end - start;
        let bb = beta.rows(start, k).into_owned();
        let cov = inv.view((start, start), (k, k)).into_owned() * s2;
        let wald = cov
            .cholesky()
            .map(|c| (bb.transpose() * c.solve(&bb))[(0, 0)])
            .unwrap_or(f64::INFINITY);
        let f = wald / k as f64;
        let p_value = f_sf(f, k as f64, df_resid);
        out.push(LmPairTest {
            column_a: ds.spec(a).name.clone(),
            column_b: ds.spec(b).name.clone(),
            statistic: f,
            df: k,
            p_value,
            detected: p_value < alpha,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ColumnSpec;
    use crate::seed;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn f_tail_matches_t_tail() {
        // F(1, d) = t(d)^2; t_{0.975}(30) = 2.042272456
        let t = 2.042_272_456_3;
        assert!((f_sf(t * t, 1.0, 30.0) - 0.05).abs() < 1e-8);
        assert_eq!(f_sf(0.0, 2.0, 10.0), 1.0);
    }

    #[test]
    fn recovers_planted_continuous_interaction() {
        let mut rng = seed::rng(1);
        let n = 300;
        let a: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let c: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| 1.0 + a[i] - b[i] + 3.0 * a[i] * b[i] + 0.1 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let ds = Dataset::new(
            vec![ColumnSpec::continuous("A"), ColumnSpec::continuous("B"), ColumnSpec::continuous("C")],
            vec![ColumnData::Continuous(a), ColumnData::Continuous(b), ColumnData::Continuous(c)],
            Response::Continuous(y),
        )
        .unwrap();
        let tests = lm_detect(&ds, 0.01).unwrap();
        assert_eq!(tests.len(), 3);
        assert!(tests[0].p_value < 1e-10 && tests[0].detected);
        assert!(tests[1].p_value > 1e-3 && tests[2].p_value > 1e-3);
    }

    #[test]
    fn aliased_design_names_columns() {
        let n = 20;
        let v: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let ds = Dataset::new(
            vec![ColumnSpec::categorical("A", ["0", "1"]), ColumnSpec::categorical("B", ["0", "1"])],
            vec![ColumnData::Categorical(v.clone()), ColumnData::Categorical(v)],
            Response::Continuous((0..n).map(|i| i as f64).collect()),
        )
        .unwrap();
        match lm_detect(&ds, 0.01) {
            Err(Error::SingularDesign(cols)) => assert!(cols.contains(&"B[1]".to_string())),
            other => panic!("{other:?}"),
        }
    }
}
