//! CSV ingestion: responses, covariates and spatial adjacency.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use bctm::data::{Covariates, DataSet, Response};
use bctm::model::{CovariateSpec, ModelSpec};

use crate::error::{CliError, Result};

/// A CSV file held as strings, with its header.
pub struct Table {
    pub path: PathBuf,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(CliError::csv(path))?;
        let headers: Vec<String> = r.headers().map_err(CliError::csv(path))?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            rows.push(rec.map_err(CliError::csv(path))?.iter().map(str::to_string).collect());
        }
        Ok(Self {
            path: path.to_path_buf(),
            headers,
            rows,
        })
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn has(&self, name: &str) -> bool {
        self.headers.iter().any(|h| h == name)
    }

    fn index(&self, name: &str) -> Result<usize> {
        self.headers.iter().position(|h| h == name).ok_or_else(|| {
            CliError::Input(format!("{}: missing column `{name}`", self.path.display()))
        })
    }

    /// Line number in the file of data row `i` (the header is line 1).
    fn line(i: usize) -> usize {
        i + 2
    }

    fn parse(&self, i: usize, name: &str, v: &str) -> Result<f64> {
        v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| {
            CliError::Input(format!(
                "{}: line {}, column `{name}`: `{v}` is not a finite number",
                self.path.display(),
                Self::line(i)
            ))
        })
    }

    pub fn real(&self, name: &str) -> Result<Vec<f64>> {
        let k = self.index(name)?;
        self.rows.iter().enumerate().map(|(i, r)| self.parse(i, name, &r[k])).collect()
    }

    /// Numeric column where empty cells (and `NA`) mean "absent".
    pub fn optional_real(&self, name: &str) -> Result<Vec<Option<f64>>> {
        let k = self.index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| match r[k].as_str() {
                "" | "NA" | "na" => Ok(None),
                v => self.parse(i, name, v).map(Some),
            })
            .collect()
    }

    pub fn labels(&self, name: &str) -> Result<Vec<String>> {
        let k = self.index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                if r[k].is_empty() {
                    Err(CliError::Input(format!(
                        "{}: line {}, column `{name}`: empty label",
                        self.path.display(),
                        Self::line(i)
                    )))
                } else {
                    Ok(r[k].clone())
                }
            })
            .collect()
    }

    /// Responses from `y`, or from `status` with `y_left` / `y_right`.
    pub fn responses(&self) -> Result<Vec<Response>> {
        if self.has("status") {
            let status = self.labels("status")?;
            let left = if self.has("y_left") { self.optional_real("y_left")? } else { vec![None; self.nrows()] };
            let right = if self.has("y_right") { self.optional_real("y_right")? } else { vec![None; self.nrows()] };
            if !self.has("y_left") && !self.has("y_right") {
                return Err(CliError::Input(format!(
                    "{}: a `status` column needs `y_left` and/or `y_right`",
                    self.path.display()
                )));
            }
            (0..self.nrows())
                .map(|i| {
                    Response::from_status(&status[i], left[i], right[i]).map_err(|e| {
                        CliError::Input(format!("{}: line {}: {e}", self.path.display(), Self::line(i)))
                    })
                })
                .collect()
        } else if self.has("y") {
            Ok(self.real("y")?.into_iter().map(Response::Exact).collect())
        } else {
            Err(CliError::Input(format!(
                "{}: missing response; give a `y` column or `status` with `y_left`/`y_right`",
                self.path.display()
            )))
        }
    }

    /// The covariate columns read by `spec`: factors for random effects and
    /// regions, numbers otherwise.
    pub fn covariates(&self, spec: &ModelSpec) -> Result<Covariates> {
        let mut cov = Covariates::new(self.nrows());
        let mut seen = BTreeSet::new();
        for t in &spec.terms {
            let factor = matches!(t.covariate, CovariateSpec::RandomEffect { .. } | CovariateSpec::Spatial { .. });
            for col in t.columns() {
                if !seen.insert(col.to_string()) {
                    continue;
                }
                if factor {
                    cov = cov.with_factor(col, self.labels(col)?)?;
                } else {
                    cov = cov.with_real(col, self.real(col)?)?;
                }
            }
        }
        Ok(cov)
    }

    pub fn dataset(&self, spec: &ModelSpec) -> Result<DataSet> {
        let cov = self.covariates(spec)?;
        Ok(DataSet::new(self.responses()?, cov)?)
    }
}

/// Undirected edges from a `region_a,region_b` CSV; both orientations of a
/// pair collapse to one edge and self-loops are rejected.
pub fn read_edges(path: &Path) -> Result<Vec<(String, String)>> {
    let t = Table::read(path)?;
    let a = t.labels("region_a")?;
    let b = t.labels("region_b")?;
    let mut set = BTreeSet::new();
    for (i, (a, b)) in a.into_iter().zip(b).enumerate() {
        if a == b {
            return Err(CliError::Input(format!(
                "{}: line {}: region `{a}` cannot neighbour itself",
                path.display(),
                Table::line(i)
            )));
        }
        set.insert(if a < b { (a, b) } else { (b, a) });
    }
    Ok(set.into_iter().collect())
}

/// Writes rows of displayable values under `header`.
pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(CliError::csv(path))?;
    w.write_record(header).map_err(CliError::csv(path))?;
    for r in rows {
        w.write_record(&r).map_err(CliError::csv(path))?;
    }
    w.flush().map_err(CliError::io(path))?;
    Ok(())
}
