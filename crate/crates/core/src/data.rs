//! Datasets and CSV ingestion.

use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColumnRole {
    Covariate,
    Response,
    Treatment,
    Ignore,
}

impl FromStr for ColumnRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "x" => Ok(ColumnRole::Covariate),
            "y" => Ok(ColumnRole::Response),
            "w" => Ok(ColumnRole::Treatment),
            "ignore" | "-" => Ok(ColumnRole::Ignore),
            other => Err(Error::Schema(format!(
                "unknown column role `{other}` (expected x, y, w or ignore)"
            ))),
        }
    }
}

/// Assigns a role to every CSV column, either by position or by header name.
#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSchema {
    /// One role per column, in file order.
    Positional(Vec<ColumnRole>),
    /// Columns picked by header; unnamed columns are ignored.
    Named {
        covariates: Vec<String>,
        responses: Vec<String>,
        treatment: Option<String>,
    },
}

impl DatasetSchema {
    /// Parses a positional role list such as `x,x,y,w`.
    pub fn parse_positional(spec: &str) -> Result<Self> {
        let roles = spec
            .split(',')
            .map(str::parse)
            .collect::<Result<Vec<ColumnRole>>>()?;
        Ok(DatasetSchema::Positional(roles))
    }

    fn resolve(&self, headers: &[String]) -> Result<Vec<ColumnRole>> {
        let roles = match self {
            DatasetSchema::Positional(roles) => {
                if roles.len() != headers.len() {
                    return Err(Error::Schema(format!(
                        "schema lists {} roles but the file has {} columns",
                        roles.len(),
                        headers.len()
                    )));
                }
                roles.clone()
            }
            DatasetSchema::Named {
                covariates,
                responses,
                treatment,
            } => {
                let mut roles = vec![ColumnRole::Ignore; headers.len()];
                let named = covariates
                    .iter()
                    .map(|c| (c, ColumnRole::Covariate))
                    .chain(responses.iter().map(|c| (c, ColumnRole::Response)))
                    .chain(treatment.iter().map(|c| (c, ColumnRole::Treatment)));
                for (name, role) in named {
                    let idx = headers
                        .iter()
                        .position(|h| h == name)
                        .ok_or_else(|| Error::Schema(format!("column `{name}` not found in header")))?;
                    if roles[idx] != ColumnRole::Ignore {
                        return Err(Error::Schema(format!("column `{name}` assigned two roles")));
                    }
                    roles[idx] = role;
                }
                roles
            }
        };
        let count = |r: ColumnRole| roles.iter().filter(|&&x| x == r).count();
        if count(ColumnRole::Covariate) == 0 {
            return Err(Error::Schema("schema needs at least one covariate column".into()));
        }
        if count(ColumnRole::Response) == 0 {
            return Err(Error::Schema("schema needs at least one response column".into()));
        }
        if count(ColumnRole::Treatment) > 1 {
            return Err(Error::Schema("schema allows at most one treatment column".into()));
        }
        Ok(roles)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
    /// Binary treatment indicator (0.0 or 1.0 per row).
    pub treatment: Option<Vec<f64>>,
    pub x_names: Vec<String>,
    pub y_names: Vec<String>,
    pub treatment_name: Option<String>,
}

impl Dataset {
    pub fn new(
        x: Array2<f64>,
        y: Array2<f64>,
        treatment: Option<Vec<f64>>,
        x_names: Vec<String>,
        y_names: Vec<String>,
        treatment_name: Option<String>,
    ) -> Result<Self> {
        let n = x.nrows();
        if y.nrows() != n || treatment.as_ref().is_some_and(|w| w.len() != n) {
            return Err(Error::Schema("column lengths disagree".into()));
        }
        if x_names.len() != x.ncols() || y_names.len() != y.ncols() {
            return Err(Error::Schema("name count does not match column count".into()));
        }
        if treatment.is_some() != treatment_name.is_some() {
            return Err(Error::Schema("treatment column and name must come together".into()));
        }
        if let Some(w) = &treatment {
            if let Some(bad) = w.iter().find(|&&v| v != 0.0 && v != 1.0) {
                return Err(Error::Schema(format!("treatment value {bad} is not 0 or 1")));
            }
        }
        Ok(Dataset {
            x,
            y,
            treatment,
            x_names,
            y_names,
            treatment_name,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Responses with the treatment indicator appended as a final column,
    /// the representation under which treatment effects are plug-in targets.
    pub fn joint_responses(&self) -> (Array2<f64>, Vec<String>) {
        let mut names = self.y_names.clone();
        match (&self.treatment, &self.treatment_name) {
            (Some(w), Some(name)) => {
                let mut out = Array2::zeros((self.n(), self.y.ncols() + 1));
                out.slice_mut(ndarray::s![.., ..self.y.ncols()]).assign(&self.y);
                for (i, v) in w.iter().enumerate() {
                    out[[i, self.y.ncols()]] = *v;
                }
                names.push(name.clone());
                (out, names)
            }
            _ => (self.y.clone(), names),
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), rows),
            y: self.y.select(Axis(0), rows),
            treatment: self
                .treatment
                .as_ref()
                .map(|w| rows.iter().map(|&i| w[i]).collect()),
            x_names: self.x_names.clone(),
            y_names: self.y_names.clone(),
            treatment_name: self.treatment_name.clone(),
        }
    }

    /// Writes covariates, then responses, then the treatment column.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = self.x_names.iter().chain(&self.y_names).map(String::as_str).collect();
        if let Some(name) = &self.treatment_name {
            header.push(name);
        }
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec: Vec<String> = self
                .x
                .row(i)
                .iter()
                .chain(self.y.row(i).iter())
                .map(|v| v.to_string())
                .collect();
            if let Some(t) = &self.treatment {
                rec.push(t[i].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<dataset csv>", e))
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Schema matching the layout written by [`Dataset::save_csv`].
    pub fn saved_schema(&self) -> DatasetSchema {
        let mut roles = vec![ColumnRole::Covariate; self.p()];
        roles.extend(std::iter::repeat_n(ColumnRole::Response, self.y.ncols()));
        if self.treatment.is_some() {
            roles.push(ColumnRole::Treatment);
        }
        DatasetSchema::Positional(roles)
    }
}

fn parse_cell(raw: &str, row: usize, column: &str) -> Result<f64> {
    let err = |message: String| Error::Parse {
        row,
        column: column.to_string(),
        message,
    };
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| err(format!("`{raw}` is not a number")))?;
    if !v.is_finite() {
        return Err(err(format!("non-finite value `{raw}`")));
    }
    Ok(v)
}

/// Reads a comma-separated file with a header row. `row` in parse errors is
/// the 1-based line number in the file.
pub fn load_dataset(path: impl AsRef<Path>, schema: &DatasetSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(std::fs::File::open(path).map_err(|e| Error::io(path, e))?);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let roles = schema.resolve(&headers)?;
    let pick = |role: ColumnRole| -> Vec<usize> {
        roles
            .iter()
            .enumerate()
            .filter(|(_, &r)| r == role)
            .map(|(i, _)| i)
            .collect()
    };
    let (xi, yi, wi) = (
        pick(ColumnRole::Covariate),
        pick(ColumnRole::Response),
        pick(ColumnRole::Treatment).first().copied(),
    );
    let (mut xs, mut ys, mut ws) = (Vec::new(), Vec::new(), Vec::new());
    let mut n = 0usize;
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(n + 2, |p| p.line() as usize);
        if record.len() != headers.len() {
            return Err(Error::Parse {
                row: line,
                column: String::new(),
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        for &c in &xi {
            xs.push(parse_cell(&record[c], line, &headers[c])?);
        }
        for &c in &yi {
            ys.push(parse_cell(&record[c], line, &headers[c])?);
        }
        if let Some(c) = wi {
            let v = parse_cell(&record[c], line, &headers[c])?;
            if v != 0.0 && v != 1.0 {
                return Err(Error::Schema(format!(
                    "treatment column `{}` has value {v} at line {line}; expected 0 or 1",
                    headers[c]
                )));
            }
            ws.push(v);
        }
        n += 1;
    }
    let x = Array2::from_shape_vec((n, xi.len()), xs).expect("row-major covariates");
    let y = Array2::from_shape_vec((n, yi.len()), ys).expect("row-major responses");
    let names = |idx: &[usize]| idx.iter().map(|&i| headers[i].clone()).collect::<Vec<_>>();
    Dataset::new(
        x,
        y,
        wi.map(|_| ws),
        names(&xi),
        names(&yi),
        wi.map(|c| headers[c].clone()),
    )
}
