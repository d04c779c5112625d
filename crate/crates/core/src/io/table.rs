use std::path::Path;

use log::warn;

use super::model::{ModelSpec, Rescale, Term, Transform};
use crate::data::Dataset;
use crate::error::{Error, Result};

/// A CSV file held as text cells under a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(headers: Vec<String>, rows: Vec<Vec<String>>) -> Result<Self> {
        if let Some(i) = rows.iter().position(|r| r.len() != headers.len()) {
            return Err(Error::Data(format!("row {} has {} cells, expected {}", i + 1, rows[i].len(), headers.len())));
        }
        Ok(Table { headers, rows })
    }

    pub fn from_numeric(headers: &[&str], columns: &[Vec<f64>]) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        let rows = (0..n)
            .map(|i| columns.iter().map(|c| c[i].to_string()).collect())
            .collect();
        Table::new(headers.iter().map(|h| h.to_string()).collect(), rows)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        Self::from_reader(&mut reader)
    }

    pub fn from_csv_str(s: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(s.as_bytes());
        Self::from_reader(&mut reader)
    }

    fn from_reader<R: std::io::Read>(reader: &mut csv::Reader<R>) -> Result<Self> {
        let headers = reader.headers()?.iter().map(str::to_string).collect();
        let rows = reader
            .records()
            .map(|r| r.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
        Table::new(headers, rows)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.headers)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.headers.iter().any(|h| h == name)
    }

    fn index_of(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    /// Raw cells of a column.
    pub fn text_column(&self, name: &str) -> Result<Vec<&str>> {
        let c = self.index_of(name)?;
        Ok(self.rows.iter().map(|r| r[c].as_str()).collect())
    }

    /// Parses a column; rows are reported 1-based, counting data rows only.
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let c = self.index_of(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r[c].parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::NonNumeric {
                        row: i + 1,
                        column: name.to_string(),
                        value: r[c].clone(),
                    })
            })
            .collect()
    }

    fn transformed(&self, name: &str, t: Transform) -> Result<Vec<f64>> {
        self.column(name)?
            .into_iter()
            .enumerate()
            .map(|(i, v)| t.apply(v, i + 1, name))
            .collect()
    }

    pub fn select(&self, idx: &[usize]) -> Table {
        Table {
            headers: self.headers.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }
}

/// What to do with a rescaled covariate outside `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RangeMode {
    #[default]
    Clamp,
    Strict,
}

/// Transformed covariates of every term before rescaling, and the
/// transformed `Z` columns (`1` for constant terms).
pub(crate) struct RawDesign {
    pub x: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
}

pub(crate) fn raw_design(table: &Table, terms: &[Term]) -> Result<RawDesign> {
    let n = table.n_rows();
    let mut x = Vec::with_capacity(terms.len());
    let mut z = Vec::with_capacity(terms.len());
    for t in terms {
        x.push(table.transformed(&t.x, t.x_transform)?);
        z.push(match &t.z {
            Some(name) => table.transformed(name, t.z_transform)?,
            None => vec![1.0; n],
        });
    }
    Ok(RawDesign { x, z })
}

/// Applies `rescale` to the covariates; values outside `[0, 1]` are clamped
/// with a warning or rejected.
pub(crate) fn rescale_design(
    raw: &mut RawDesign,
    terms: &[Term],
    rescale: &[Rescale],
    mode: RangeMode,
) -> Result<()> {
    for ((col, t), r) in raw.x.iter_mut().zip(terms).zip(rescale) {
        let mut clamped = 0;
        for (i, v) in col.iter_mut().enumerate() {
            let u = r.apply(*v);
            if (0.0..=1.0).contains(&u) {
                *v = u;
                continue;
            }
            if mode == RangeMode::Strict {
                return Err(Error::OutOfRange {
                    row: i + 1,
                    column: t.x.clone(),
                    value: *v,
                });
            }
            clamped += 1;
            *v = u.clamp(0.0, 1.0);
        }
        if clamped > 0 {
            warn!("{clamped} values of `{}` fell outside the fitted range and were clamped", t.x);
        }
    }
    Ok(())
}

/// Reads the model's columns, applies transforms, fits the min-max records
/// and rescales every covariate onto `[0, 1]`. Returns the dataset and a
/// copy of `spec` carrying the rescale records.
pub fn ingest(table: &Table, spec: &ModelSpec) -> Result<(Dataset, ModelSpec)> {
    spec.validate()?;
    if spec.terms.is_empty() {
        return Err(Error::Config("model has no terms".into()));
    }
    let y = table.column(&spec.response)?;
    let mut raw = raw_design(table, &spec.terms)?;
    let rescale = spec
        .terms
        .iter()
        .zip(&raw.x)
        .map(|(t, col)| Rescale::fit(&t.x, col))
        .collect::<Result<Vec<_>>>()?;
    rescale_design(&mut raw, &spec.terms, &rescale, RangeMode::Strict)?;
    let mut fitted = spec.clone();
    fitted.rescale = rescale;
    Ok((Dataset::new(raw.x, raw.z, y)?, fitted))
}

pub fn ingest_path(path: &Path, spec: &ModelSpec) -> Result<(Dataset, ModelSpec)> {
    ingest(&Table::read_csv(path)?, spec)
}

/// CSV with columns `x1..xd, z1..zd, y` holding a dataset.
pub fn dataset_table(data: &Dataset) -> Result<Table> {
    let d = data.d();
    let mut headers: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
    headers.extend((1..=d).map(|j| format!("z{j}")));
    headers.push("y".into());
    let mut columns: Vec<Vec<f64>> = (0..d).map(|j| data.x(j).to_vec()).collect();
    columns.extend((0..d).map(|j| data.z(j).to_vec()));
    columns.push(data.y().to_vec());
    let names: Vec<&str> = headers.iter().map(String::as_str).collect();
    Table::from_numeric(&names, &columns)
}

/// The model matching `dataset_table`: term `j` is `m_j(x_j) z_j`, with
/// constant `Z` columns left implicit.
pub fn dataset_model(data: &Dataset) -> ModelSpec {
    let terms = (0..data.d())
        .map(|j| {
            let x = format!("x{}", j + 1);
            if data.z_is_constant(j) && data.z(j)[0] == 1.0 {
                Term::new(&x, None)
            } else {
                Term::new(&x, Some(&format!("z{}", j + 1)))
            }
        })
        .collect();
    ModelSpec::new("y", terms)
}
