//! CSV datasets with a JSON sidecar naming the column roles, plus an
//! optional companion CSV of exogenous noise for counterfactual regeneration.
//!
//! Layout for `data.csv`: sidecar `data.json`, noise `data.noise.csv`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::{Dataset, OutcomeKind, Scm};
use crate::error::{Error, Result};
use crate::matrix::DataMatrix;

/// Column roles for one dataset CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub sensitive: Vec<String>,
    #[serde(default)]
    pub categorical: Vec<String>,
    pub outcome: String,
    /// Inferred from the outcome column when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome_kind: Option<OutcomeKind>,
    /// Every remaining column when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scm: Option<Scm>,
}

impl Sidecar {
    pub fn for_dataset(ds: &Dataset) -> Self {
        Self {
            sensitive: ds.b.col_names().to_vec(),
            categorical: ds.categorical.clone(),
            outcome: "Y".into(),
            outcome_kind: Some(ds.outcome),
            features: Some(ds.a.col_names().to_vec()),
            noise_file: None,
            scm: ds.scm.clone(),
        }
    }
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn noise_path(csv: &Path) -> PathBuf {
    let stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("data");
    csv.with_file_name(format!("{stem}.noise.csv"))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Header plus numeric rows. Every cell must parse as `f64`.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(csv_err(path))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, cell)| {
                cell.trim().parse::<f64>().map_err(|_| {
                    Error::Parse(format!(
                        "{}: row {}, column `{}`: `{cell}` is not a number",
                        path.display(),
                        i + 1,
                        header[j]
                    ))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn read_matrix(path: &Path) -> Result<DataMatrix> {
    let (header, rows) = read_table(path)?;
    DataMatrix::from_rows(&rows, header)
}

/// Writes `m` with its column names as header. Floats use the shortest
/// representation that round-trips.
pub fn write_matrix(path: &Path, m: &DataMatrix) -> Result<()> {
    write_columns(path, &[m])
}

fn write_columns(path: &Path, parts: &[&DataMatrix]) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let header: Vec<&str> = parts
        .iter()
        .flat_map(|m| m.col_names().iter().map(String::as_str))
        .collect();
    w.write_record(&header).map_err(csv_err(path))?;
    let n = parts.first().map_or(0, |m| m.nrows());
    for i in 0..n {
        let rec: Vec<String> = parts.iter().flat_map(|m| m.row(i)).map(|v| v.to_string()).collect();
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(io_err(dir)),
        _ => Ok(()),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Writes the dataset CSV (sensitive, features, `Y`), its sidecar, and the
/// noise CSV when the dataset carries one. Returns the paths written.
pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<Vec<PathBuf>> {
    let y = DataMatrix::from_columns(std::slice::from_ref(&ds.y), vec!["Y".into()])?;
    write_columns(path, &[&ds.b, &ds.a, &y])?;
    let mut written = vec![path.to_path_buf()];
    let mut sidecar = Sidecar::for_dataset(ds);
    if let Some(noise) = &ds.noise {
        let np = noise_path(path);
        write_matrix(&np, noise)?;
        sidecar.noise_file = np.file_name().map(|f| f.to_string_lossy().into_owned());
        written.push(np);
    }
    let sp = sidecar_path(path);
    write_json(&sp, &sidecar)?;
    written.push(sp);
    Ok(written)
}

/// Reads a dataset CSV. Column roles come from `sidecar` if given, else
/// from the file next to the CSV.
pub fn read_dataset(path: &Path, sidecar: Option<&Sidecar>) -> Result<Dataset> {
    let owned;
    let sc = match sidecar {
        Some(s) => s,
        None => {
            owned = read_json::<Sidecar>(&sidecar_path(path))?;
            &owned
        }
    };
    let (header, rows) = read_table(path)?;
    let all = DataMatrix::from_rows(&rows, header.clone())?;
    let pick = |names: &[String]| -> Result<DataMatrix> {
        let idx = names
            .iter()
            .map(|c| {
                all.column_index(c)
                    .ok_or_else(|| Error::FeatureMismatch(format!("{}: no column `{c}`", path.display())))
            })
            .collect::<Result<Vec<_>>>()?;
        all.select_columns(&idx)
    };
    if sc.sensitive.is_empty() {
        return Err(Error::InvalidParams("at least one sensitive column is required".into()));
    }
    if let Some(c) = sc.categorical.iter().find(|c| !sc.sensitive.contains(c)) {
        return Err(Error::InvalidParams(format!(
            "categorical column `{c}` is not listed as sensitive"
        )));
    }
    let features = match &sc.features {
        Some(f) => f.clone(),
        None => header
            .iter()
            .filter(|h| **h != sc.outcome && !sc.sensitive.contains(h))
            .cloned()
            .collect(),
    };
    if features.is_empty() {
        return Err(Error::InvalidParams("no non-sensitive feature columns".into()));
    }
    let b = pick(&sc.sensitive)?;
    let a = pick(&features)?;
    let y = pick(std::slice::from_ref(&sc.outcome))?.column(0);
    let outcome = sc.outcome_kind.unwrap_or_else(|| infer_outcome(&y));
    if outcome == OutcomeKind::Binary && y.iter().any(|v| *v != 0.0 && *v != 1.0) {
        return Err(Error::InvalidParams(format!(
            "binary outcome `{}` has values outside {{0, 1}}",
            sc.outcome
        )));
    }
    let noise = match &sc.noise_file {
        Some(f) => {
            let np = path.with_file_name(f);
            let m = read_matrix(&np)?;
            if m.nrows() != y.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{}: {} noise rows for {} data rows",
                    np.display(),
                    m.nrows(),
                    y.len()
                )));
            }
            Some(m)
        }
        None => None,
    };
    Ok(Dataset {
        a,
        b,
        categorical: sc.categorical.clone(),
        y,
        outcome,
        noise,
        scm: sc.scm.clone(),
    })
}

fn infer_outcome(y: &[f64]) -> OutcomeKind {
    if y.iter().all(|v| *v == 0.0 || *v == 1.0) {
        OutcomeKind::Binary
    } else {
        OutcomeKind::Continuous
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_loan, LoanParams};

    #[test]
    fn loan_round_trip_keeps_values_and_noise() {
        let dir = tempfile::tempdir().unwrap();
        let ds = gen_loan(&LoanParams {
            n: 50,
            ..Default::default()
        })
        .unwrap();
        let path = dir.path().join("loan.csv");
        let written = write_dataset(&path, &ds).unwrap();
        assert_eq!(written.len(), 3);
        let header = fs::read_to_string(&path).unwrap().lines().next().unwrap().to_string();
        assert_eq!(header, "B,E,I,Y");
        let back = read_dataset(&path, None).unwrap();
        assert_eq!(back, ds);
        // Regeneration from the reloaded noise matches the original.
        let b1 = ds.groups().unwrap().world(1, &ds.b).unwrap();
        assert_eq!(back.regenerate(&b1).unwrap(), ds.regenerate(&b1).unwrap());
    }

    #[test]
    fn ingestion_infers_features_and_outcome_kind() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        fs::write(&path, "sex,age,income,label\n0,30,1.5,1\n1,40,2.5,0\n1,50,0.5,1\n").unwrap();
        let sc = Sidecar {
            sensitive: vec!["sex".into()],
            categorical: vec!["sex".into()],
            outcome: "label".into(),
            outcome_kind: None,
            features: None,
            noise_file: None,
            scm: None,
        };
        let ds = read_dataset(&path, Some(&sc)).unwrap();
        assert_eq!(ds.a.col_names(), ["age", "income"]);
        assert_eq!(ds.outcome, OutcomeKind::Binary);
        assert!(ds.noise.is_none());
    }

    #[test]
    fn errors_carry_path_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.csv");
        let e = read_table(&missing).unwrap_err();
        assert!(e.to_string().contains("nope.csv"));

        let bad = dir.path().join("bad.csv");
        fs::write(&bad, "a,b\n1,x\n").unwrap();
        let e = read_table(&bad).unwrap_err().to_string();
        assert!(e.contains("bad.csv") && e.contains("`b`"), "{e}");
    }
}
