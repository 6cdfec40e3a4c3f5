//! Reading a CSV table into a design matrix and response vector.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::CliError;
use crate::glm::Dataset;

/// Columns of a CSV file kept as raw strings.
#[derive(Debug, Clone)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            rows.push(record.iter().map(str::to_string).collect());
        }
        if rows.is_empty() {
            return Err(CliError::Input(format!("{}: no data rows", path.display())));
        }
        Ok(Table { headers, rows })
    }

    fn index(&self, name: &str) -> Result<usize, CliError> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Usage(format!("column `{name}` not found in header")))
    }

    fn numeric(&self, col: usize) -> Result<Vec<f64>, CliError> {
        self.rows
            .iter()
            .enumerate()
            .map(|(r, row)| {
                let cell = &row[col];
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        CliError::Input(format!(
                            "row {}, column `{}`: `{cell}` is not a finite number",
                            r + 2,
                            self.headers[col]
                        ))
                    })
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct DesignSpec<'a> {
    pub response: &'a str,
    /// `None` means every column other than the response.
    pub covariates: Option<&'a [String]>,
    pub one_hot: &'a [String],
    pub intercept: bool,
}

/// A dataset with the names of its design columns.
#[derive(Debug, Clone)]
pub struct NamedDataset {
    pub data: Dataset,
    pub columns: Vec<String>,
}

/// Build the design. One-hot columns expand to indicators for every level
/// but the first (in sorted order) when an intercept is present, and for
/// every level otherwise.
pub fn build_dataset(table: &Table, spec: &DesignSpec<'_>) -> Result<NamedDataset, CliError> {
    let response_col = table.index(spec.response)?;
    for name in spec.one_hot {
        table.index(name)?;
    }
    let covariates: Vec<String> = match spec.covariates {
        Some(list) => list.to_vec(),
        None => table
            .headers
            .iter()
            .filter(|h| *h != spec.response)
            .cloned()
            .collect(),
    };
    if covariates.iter().any(|c| c == spec.response) {
        return Err(CliError::Usage(format!(
            "response `{}` listed as a covariate",
            spec.response
        )));
    }
    for name in spec.one_hot {
        if !covariates.contains(name) {
            return Err(CliError::Usage(format!(
                "one-hot column `{name}` is not a covariate"
            )));
        }
    }

    let n = table.rows.len();
    let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
    if spec.intercept {
        columns.push(("(intercept)".to_string(), vec![1.0; n]));
    }
    for name in &covariates {
        let col = table.index(name)?;
        if spec.one_hot.contains(name) {
            let mut levels: Vec<&str> = table.rows.iter().map(|r| r[col].as_str()).collect();
            levels.sort_unstable();
            levels.dedup();
            let skip = usize::from(spec.intercept);
            for level in levels.iter().skip(skip) {
                let values = table
                    .rows
                    .iter()
                    .map(|r| f64::from(u8::from(r[col] == *level)))
                    .collect();
                columns.push((format!("{name}={level}"), values));
            }
        } else {
            columns.push((name.clone(), table.numeric(col)?));
        }
    }
    if columns.is_empty() {
        return Err(CliError::Usage("design has no columns".into()));
    }
    let d = columns.len();
    let design = DMatrix::from_fn(n, d, |i, j| columns[j].1[i]);
    let response = DVector::from_vec(table.numeric(response_col)?);
    let data = Dataset::new(design, response).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(NamedDataset {
        data,
        columns: columns.into_iter().map(|(name, _)| name).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> Table {
        Table {
            headers: vec!["y".into(), "x".into(), "state".into()],
            rows: vec![
                vec!["1".into(), "0.5".into(), "b".into()],
                vec!["0".into(), "1.5".into(), "a".into()],
                vec!["3".into(), "2.5".into(), "c".into()],
                vec!["2".into(), "3.5".into(), "a".into()],
                vec!["2".into(), "4.5".into(), "b".into()],
            ],
        }
    }

    #[test]
    fn one_hot_drops_reference_level() {
        let one_hot = vec!["state".to_string()];
        let spec = DesignSpec {
            response: "y",
            covariates: None,
            one_hot: &one_hot,
            intercept: true,
        };
        let named = build_dataset(&table(), &spec).unwrap();
        assert_eq!(named.columns, ["(intercept)", "x", "state=b", "state=c"]);
        assert_eq!(named.data.design()[(0, 2)], 1.0);
        assert_eq!(named.data.design()[(2, 3)], 1.0);
    }

    #[test]
    fn categorical_without_flag_is_a_parse_error() {
        let spec = DesignSpec {
            response: "y",
            covariates: None,
            one_hot: &[],
            intercept: true,
        };
        assert!(matches!(
            build_dataset(&table(), &spec),
            Err(CliError::Input(_))
        ));
    }

    #[test]
    fn missing_column_is_usage() {
        let cov = vec!["nope".to_string()];
        let spec = DesignSpec {
            response: "y",
            covariates: Some(&cov),
            one_hot: &[],
            intercept: true,
        };
        assert!(matches!(
            build_dataset(&table(), &spec),
            Err(CliError::Usage(_))
        ));
    }
}
