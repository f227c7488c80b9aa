//! CSV ingestion and group-specification parsing.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use npgroup::GroupMap;

use crate::CliError;

/// A validated numeric table: response plus named covariate columns.
pub struct Dataset {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    /// Names of the covariate columns, in file order.
    pub names: Vec<String>,
}

/// Read an RFC 4180 CSV with a header row into (header, numeric rows).
/// Blank or non-numeric cells reject the file, naming the offending lines.
fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::Parse { line: 1, reason: e.to_string() })?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    let mut bad_lines = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let line = idx + 2; // header is line 1
        let rec = rec.map_err(|e| CliError::Parse { line, reason: e.to_string() })?;
        let mut row = Vec::with_capacity(header.len());
        let mut ok = true;
        for cell in rec.iter() {
            match cell.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => row.push(v),
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok && row.len() == header.len() {
            rows.push(row);
        } else {
            bad_lines.push(line);
        }
    }
    if !bad_lines.is_empty() {
        return Err(CliError::Parse {
            line: bad_lines[0],
            reason: format!(
                "missing or non-numeric values on lines {}",
                bad_lines.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(", ")
            ),
        });
    }
    if rows.is_empty() {
        return Err(CliError::Usage(format!("{} has no data rows", path.display())));
    }
    Ok((header, rows))
}

/// Load a dataset, splitting off the named response column.
pub fn load_dataset(path: &Path, response: &str) -> Result<Dataset, CliError> {
    let (header, rows) = read_table(path)?;
    let y_idx = header
        .iter()
        .position(|h| h == response)
        .ok_or_else(|| CliError::MissingColumn { name: response.to_string() })?;
    let n = rows.len();
    let names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != y_idx)
        .map(|(_, h)| h.clone())
        .collect();
    let y = DVector::from_fn(n, |i, _| rows[i][y_idx]);
    let x = DMatrix::from_fn(n, names.len(), |i, j| {
        let src = if j < y_idx { j } else { j + 1 };
        rows[i][src]
    });
    Ok(Dataset { y, x, names })
}

impl Dataset {
    /// Column indices for a comma-separated name list.
    pub fn columns(&self, list: &str) -> Result<Vec<usize>, CliError> {
        list.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|name| {
                self.names
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| CliError::MissingColumn { name: name.to_string() })
            })
            .collect()
    }

    /// Submatrix of the named columns, in the order given.
    pub fn submatrix(&self, cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(self.y.len(), cols.len(), |i, j| self.x[(i, cols[j])])
    }
}

/// Parse a group specification into a [`GroupMap`] over the dataset's
/// covariate columns. Inline syntax `name:col1,col2;name2:col3`, or a path
/// to a two-column `column,group` CSV mapping file. Every covariate column
/// must land in exactly one group.
pub fn parse_groups(dataset: &Dataset, spec: &str) -> Result<GroupMap, CliError> {
    // label -> columns, insertion-ordered by first appearance
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let mut assigned = vec![false; dataset.names.len()];

    let mut assign = |label: &str, col_name: &str,
                      order: &mut Vec<String>,
                      groups: &mut BTreeMap<String, Vec<usize>>|
     -> Result<(), CliError> {
        let col = dataset
            .names
            .iter()
            .position(|h| h == col_name)
            .ok_or_else(|| CliError::MissingColumn { name: col_name.to_string() })?;
        if assigned[col] {
            return Err(CliError::OverlappingGroups { col: col_name.to_string() });
        }
        assigned[col] = true;
        if !groups.contains_key(label) {
            order.push(label.to_string());
        }
        groups.entry(label.to_string()).or_default().push(col);
        Ok(())
    };

    if spec.contains(':') {
        for part in spec.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            let (label, cols) = part
                .split_once(':')
                .ok_or_else(|| CliError::Usage(format!("bad group spec fragment `{part}`")))?;
            for col_name in cols.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                assign(label.trim(), col_name, &mut order, &mut groups)?;
            }
        }
    } else {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_path(spec)
            .map_err(|e| CliError::Usage(format!("cannot read group map {spec}: {e}")))?;
        for (idx, rec) in rdr.records().enumerate() {
            let line = idx + 1;
            let rec = rec.map_err(|e| CliError::Parse { line, reason: e.to_string() })?;
            if rec.len() != 2 {
                return Err(CliError::Parse {
                    line,
                    reason: "group map rows must be `column,group`".into(),
                });
            }
            let (col_name, label) = (rec[0].trim().to_string(), rec[1].trim().to_string());
            if idx == 0 && col_name == "column" && label == "group" {
                continue; // optional header
            }
            assign(&label, &col_name, &mut order, &mut groups)?;
        }
    }

    if let Some(col) = assigned.iter().position(|a| !a) {
        return Err(CliError::UnassignedColumn { col: dataset.names[col].clone() });
    }
    let gm = GroupMap {
        groups: order.iter().map(|l| groups[l].clone()).collect(),
        labels: Some(order),
    };
    gm.validate(dataset.names.len())
        .map_err(CliError::Numeric)?;
    Ok(gm)
}
