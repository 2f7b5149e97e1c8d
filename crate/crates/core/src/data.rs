//! Typed covariate matrix plus response, ingestion and standardization.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    Categorical { levels: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
}

impl ColumnSpec {
    pub fn continuous(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Continuous,
        }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, levels: impl IntoIterator<Item = S>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Categorical {
                levels: levels.into_iter().map(Into::into).collect(),
            },
        }
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self.kind, ColumnKind::Continuous)
    }

    pub fn n_levels(&self) -> Option<usize> {
        match &self.kind {
            ColumnKind::Continuous => None,
            ColumnKind::Categorical { levels } => Some(levels.len()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ResponseKind {
    Continuous,
    Ordinal { n_grades: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub enum ColumnData {
    Continuous(Vec<f64>),
    /// Level indices into the column's declared levels.
    Categorical(Vec<usize>),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Continuous(v) => v.len(),
            ColumnData::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Response {
    Continuous(Vec<f64>),
    Ordinal { grades: Vec<usize>, n_grades: usize },
}

impl Response {
    pub fn len(&self) -> usize {
        match self {
            Response::Continuous(v) => v.len(),
            Response::Ordinal { grades, .. } => grades.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> ResponseKind {
        match self {
            Response::Continuous(_) => ResponseKind::Continuous,
            Response::Ordinal { n_grades, .. } => ResponseKind::Ordinal {
                n_grades: *n_grades,
            },
        }
    }
}

/// `z = (x - center) / scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub center: f64,
    pub scale: f64,
}

impl Affine {
    pub fn forward(&self, x: f64) -> f64 {
        (x - self.center) / self.scale
    }

    pub fn inverse(&self, z: f64) -> f64 {
        self.center + self.scale * z
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    columns: Vec<ColumnSpec>,
    data: Vec<ColumnData>,
    response: Response,
    standardized: bool,
    transforms: Vec<Option<Affine>>,
    response_transform: Option<Affine>,
}

impl Dataset {
    pub fn new(columns: Vec<ColumnSpec>, data: Vec<ColumnData>, response: Response) -> Result<Self> {
        if columns.len() != data.len() {
            return Err(Error::LengthMismatch(format!(
                "{} column specs for {} data columns",
                columns.len(),
                data.len()
            )));
        }
        let mut seen = HashSet::new();
        for spec in &columns {
            if !seen.insert(spec.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column name `{}`", spec.name)));
            }
            if let ColumnKind::Categorical { levels } = &spec.kind {
                if levels.is_empty() {
                    return Err(Error::Schema(format!("column `{}` declares no levels", spec.name)));
                }
                let unique: HashSet<_> = levels.iter().collect();
                if unique.len() != levels.len() {
                    return Err(Error::Schema(format!("column `{}` has repeated levels", spec.name)));
                }
            }
        }
        let m = response.len();
        for (spec, col) in columns.iter().zip(&data) {
            if col.len() != m {
                return Err(Error::LengthMismatch(format!(
                    "column `{}` has {} rows, response has {m}",
                    spec.name,
                    col.len()
                )));
            }
            match (&spec.kind, col) {
                (ColumnKind::Continuous, ColumnData::Continuous(v)) => {
                    if let Some(row) = v.iter().position(|x| !x.is_finite()) {
                        return Err(Error::Parse {
                            row: row + 1,
                            column: spec.name.clone(),
                            message: "non-finite value".into(),
                        });
                    }
                }
                (ColumnKind::Categorical { levels }, ColumnData::Categorical(v)) => {
                    if let Some(row) = v.iter().position(|&l| l >= levels.len()) {
                        return Err(Error::Parse {
                            row: row + 1,
                            column: spec.name.clone(),
                            message: format!("level index {} out of range", v[row]),
                        });
                    }
                }
                _ => {
                    return Err(Error::Schema(format!(
                        "column `{}` data does not match its declared kind",
                        spec.name
                    )))
                }
            }
        }
        match &response {
            Response::Continuous(y) => {
                if let Some(row) = y.iter().position(|x| !x.is_finite()) {
                    return Err(Error::Parse {
                        row: row + 1,
                        column: "response".into(),
                        message: "non-finite value".into(),
                    });
                }
            }
            Response::Ordinal { grades, n_grades } => {
                if *n_grades < 2 {
                    return Err(Error::Schema("ordinal response needs at least 2 grades".into()));
                }
                if let Some(row) = grades.iter().position(|g| g >= n_grades) {
                    return Err(Error::OrdinalRange {
                        row: row + 1,
                        value: grades[row] as i64,
                        n_grades: *n_grades,
                    });
                }
            }
        }
        let n_cols = columns.len();
        Ok(Self {
            columns,
            data,
            response,
            standardized: false,
            transforms: vec![None; n_cols],
            response_transform: None,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.response.len()
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn spec(&self, col: usize) -> &ColumnSpec {
        &self.columns[col]
    }

    pub fn column(&self, col: usize) -> &ColumnData {
        &self.data[col]
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn response(&self) -> &Response {
        &self.response
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    /// Standardization applied to a covariate, if any.
    pub fn transform(&self, col: usize) -> Option<Affine> {
        self.transforms[col]
    }

    pub fn response_transform(&self) -> Option<Affine> {
        self.response_transform
    }

    /// Centers and scales every continuous covariate (and optionally a
    /// continuous response) to sample mean 0 and sample sd 1.
    pub fn standardize(&self, standardize_response: bool) -> Result<Dataset> {
        if self.standardized {
            return Err(Error::AlreadyStandardized);
        }
        let mut out = self.clone();
        for (j, col) in out.data.iter_mut().enumerate() {
            if let ColumnData::Continuous(v) = col {
                let t = fit_affine(v, &self.columns[j].name)?;
                v.iter_mut().for_each(|x| *x = t.forward(*x));
                out.transforms[j] = Some(t);
            }
        }
        if standardize_response {
            if let Response::Continuous(y) = &mut out.response {
                let t = fit_affine(y, "response")?;
                y.iter_mut().for_each(|x| *x = t.forward(*x));
                out.response_transform = Some(t);
            }
        }
        out.standardized = true;
        Ok(out)
    }

    /// Maps a value on this dataset's (possibly standardized) scale back to
    /// the raw scale of column `col`.
    pub fn to_raw(&self, col: usize, value: f64) -> f64 {
        self.transforms[col].map_or(value, |t| t.inverse(value))
    }

    pub fn from_raw(&self, col: usize, value: f64) -> f64 {
        self.transforms[col].map_or(value, |t| t.forward(value))
    }
}

fn fit_affine(v: &[f64], name: &str) -> Result<Affine> {
    let sd = stats::sample_sd(v);
    if !(sd > 0.0) {
        return Err(Error::ZeroVariance(name.to_string()));
    }
    Ok(Affine {
        center: stats::mean(v),
        scale: sd,
    })
}

#[derive(Clone, Debug)]
pub struct LoadOptions {
    pub schema: Vec<ColumnSpec>,
    pub response: String,
    pub response_kind: ResponseKind,
    pub delimiter: u8,
}

pub fn load_dataset(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_dataset(file, opts)
}

/// Reads delimiter-separated text with a mandatory header row. Columns not
/// named in the schema are ignored.
pub fn read_dataset<R: Read>(reader: R, opts: &LoadOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let find = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let positions: Vec<usize> = opts.schema.iter().map(|c| find(&c.name)).collect::<Result<_>>()?;
    let response_pos = find(&opts.response)?;

    let mut data: Vec<ColumnData> = opts
        .schema
        .iter()
        .map(|c| match c.kind {
            ColumnKind::Continuous => ColumnData::Continuous(Vec::new()),
            ColumnKind::Categorical { .. } => ColumnData::Categorical(Vec::new()),
        })
        .collect();
    let mut y_cont = Vec::new();
    let mut y_ord = Vec::new();

    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 1;
        for ((spec, &pos), col) in opts.schema.iter().zip(&positions).zip(data.iter_mut()) {
            let cell = record.get(pos).unwrap_or("");
            match (&spec.kind, col) {
                (ColumnKind::Continuous, ColumnData::Continuous(v)) => {
                    let x = parse_real(cell).ok_or_else(|| Error::Parse {
                        row,
                        column: spec.name.clone(),
                        message: format!("non-numeric value `{cell}`"),
                    })?;
                    v.push(x);
                }
                (ColumnKind::Categorical { levels }, ColumnData::Categorical(v)) => {
                    let level = levels.iter().position(|l| l == cell).ok_or_else(|| Error::Parse {
                        row,
                        column: spec.name.clone(),
                        message: format!("undeclared level `{cell}`"),
                    })?;
                    v.push(level);
                }
                _ => unreachable!("column buffers are built from the schema"),
            }
        }
        let cell = record.get(response_pos).unwrap_or("");
        match opts.response_kind {
            ResponseKind::Continuous => {
                let y = parse_real(cell).ok_or_else(|| Error::Parse {
                    row,
                    column: opts.response.clone(),
                    message: format!("non-numeric value `{cell}`"),
                })?;
                y_cont.push(y);
            }
            ResponseKind::Ordinal { n_grades } => {
                let g: i64 = cell.parse().map_err(|_| Error::Parse {
                    row,
                    column: opts.response.clone(),
                    message: format!("non-integer grade `{cell}`"),
                })?;
                if g < 0 || g as usize >= n_grades {
                    return Err(Error::OrdinalRange {
                        row,
                        value: g,
                        n_grades,
                    });
                }
                y_ord.push(g as usize);
            }
        }
    }
    let response = match opts.response_kind {
        ResponseKind::Continuous => Response::Continuous(y_cont),
        ResponseKind::Ordinal { n_grades } => Response::Ordinal {
            grades: y_ord,
            n_grades,
        },
    };
    if response.is_empty() {
        return Err(Error::Empty("dataset has no rows"));
    }
    Dataset::new(opts.schema.clone(), data, response)
}

fn parse_real(cell: &str) -> Option<f64> {
    cell.parse::<f64>().ok().filter(|x| x.is_finite())
}

/// Writes covariates and response (named `response_name`) as delimited text.
pub fn write_dataset<W: Write>(ds: &Dataset, writer: W, response_name: &str, delimiter: u8) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(writer);
    let mut header: Vec<&str> = ds.columns.iter().map(|c| c.name.as_str()).collect();
    header.push(response_name);
    w.write_record(&header)?;
    for i in 0..ds.n_rows() {
        let mut rec: Vec<String> = Vec::with_capacity(header.len());
        for (spec, col) in ds.columns.iter().zip(&ds.data) {
            rec.push(match (col, &spec.kind) {
                (ColumnData::Continuous(v), _) => format!("{}", v[i]),
                (ColumnData::Categorical(v), ColumnKind::Categorical { levels }) => levels[v[i]].clone(),
                _ => unreachable!(),
            });
        }
        rec.push(match &ds.response {
            Response::Continuous(y) => format!("{}", y[i]),
            Response::Ordinal { grades, .. } => grades[i].to_string(),
        });
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary_schema(names: &[&str]) -> Vec<ColumnSpec> {
        names.iter().map(|n| ColumnSpec::categorical(*n, ["0", "1"])).collect()
    }

    #[test]
    fn loads_three_binary_columns() {
        let mut text = String::from("X1,X2,X3,Y\n");
        for i in 0..500 {
            text.push_str(&format!("{},{},{},{}\n", i % 2, (i / 2) % 2, (i / 4) % 2, i as f64 * 0.01));
        }
        let opts = LoadOptions {
            schema: binary_schema(&["X1", "X2", "X3"]),
            response: "Y".into(),
            response_kind: ResponseKind::Continuous,
            delimiter: b',',
        };
        let ds = read_dataset(text.as_bytes(), &opts).unwrap();
        assert_eq!(ds.n_rows(), 500);
        assert_eq!(ds.n_columns(), 3);
    }

    #[test]
    fn missing_schema_column_is_reported() {
        let opts = LoadOptions {
            schema: binary_schema(&["X1", "X2", "X3"]),
            response: "Y".into(),
            response_kind: ResponseKind::Continuous,
            delimiter: b',',
        };
        let err = read_dataset("X1,X2,Y\n0,1,0.5\n".as_bytes(), &opts).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(ref c) if c == "X3"), "{err}");
    }

    #[test]
    fn ordinal_out_of_range_names_row() {
        let opts = LoadOptions {
            schema: vec![ColumnSpec::continuous("A")],
            response: "G".into(),
            response_kind: ResponseKind::Ordinal { n_grades: 5 },
            delimiter: b';',
        };
        let err = read_dataset("A;G\n0.1;0\n0.2;7\n".as_bytes(), &opts).unwrap_err();
        match err {
            Error::OrdinalRange { row, value, n_grades } => {
                assert_eq!((row, value, n_grades), (2, 7, 5));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn non_numeric_continuous_cell() {
        let opts = LoadOptions {
            schema: vec![ColumnSpec::continuous("A")],
            response: "Y".into(),
            response_kind: ResponseKind::Continuous,
            delimiter: b',',
        };
        let err = read_dataset("A,Y\n1,2\nabc,3\n".as_bytes(), &opts).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, ref column, .. } if column == "A"));
    }

    fn one_column(values: Vec<f64>) -> Dataset {
        let m = values.len();
        Dataset::new(
            vec![ColumnSpec::continuous("A")],
            vec![ColumnData::Continuous(values)],
            Response::Continuous(vec![0.0; m]),
        )
        .unwrap()
    }

    #[test]
    fn standardize_small_column() {
        let ds = one_column(vec![1.0, 2.0, 3.0]).standardize(false).unwrap();
        assert_eq!(ds.column(0), &ColumnData::Continuous(vec![-1.0, 0.0, 1.0]));
        assert!(ds.is_standardized());
        assert!(matches!(ds.standardize(false), Err(Error::AlreadyStandardized)));
    }

    #[test]
    fn zero_variance_is_an_error() {
        let err = one_column(vec![5.0, 5.0, 5.0]).standardize(false).unwrap_err();
        assert!(matches!(err, Error::ZeroVariance(ref c) if c == "A"));
    }

    #[test]
    fn standardize_round_trip_and_idempotence() {
        let raw = vec![3.2, -1.5, 8.25, 0.0, 4.4, 2.2];
        let ds = one_column(raw.clone()).standardize(false).unwrap();
        let ColumnData::Continuous(z) = ds.column(0) else { unreachable!() };
        for (x, zi) in raw.iter().zip(z) {
            assert!((ds.to_raw(0, *zi) - x).abs() < 1e-12);
        }
        let again = one_column(z.clone()).standardize(false).unwrap();
        let ColumnData::Continuous(z2) = again.column(0) else { unreachable!() };
        for (a, b) in z.iter().zip(z2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_duplicate_levels_and_names() {
        let err = Dataset::new(
            vec![ColumnSpec::categorical("A", ["x", "x"])],
            vec![ColumnData::Categorical(vec![0])],
            Response::Continuous(vec![0.0]),
        );
        assert!(err.is_err());
        let err = Dataset::new(
            vec![ColumnSpec::continuous("A"), ColumnSpec::continuous("A")],
            vec![ColumnData::Continuous(vec![0.0]), ColumnData::Continuous(vec![1.0])],
            Response::Continuous(vec![0.0]),
        );
        assert!(err.is_err());
    }

    #[test]
    fn write_then_read_back() {
        let ds = Dataset::new(
            vec![ColumnSpec::continuous("A"), ColumnSpec::categorical("B", ["lo", "hi"])],
            vec![
                ColumnData::Continuous(vec![0.1, -2.5]),
                ColumnData::Categorical(vec![1, 0]),
            ],
            Response::Ordinal {
                grades: vec![3, 0],
                n_grades: 5,
            },
        )
        .unwrap();
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf, "G", b',').unwrap();
        let opts = LoadOptions {
            schema: ds.columns().to_vec(),
            response: "G".into(),
            response_kind: ResponseKind::Ordinal { n_grades: 5 },
            delimiter: b',',
        };
        assert_eq!(read_dataset(buf.as_slice(), &opts).unwrap(), ds);
    }
}
