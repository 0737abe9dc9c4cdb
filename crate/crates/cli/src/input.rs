//! Matrix files: JSON `{"n": 2, "matrix": [[2, -1], [-1, 2]]}` or plain
//! text with `n` on the first line followed by `n` rows.

use std::path::Path;

use permanental::SquareMatrix;
use serde::Deserialize;

use crate::CliError;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixFile {
    n: usize,
    matrix: Vec<Vec<f64>>,
}

fn build(n: usize, rows: Vec<Vec<f64>>) -> Result<SquareMatrix, CliError> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::Usage(format!(
            "expected {n} rows of {n} entries, found row lengths {:?}",
            rows.iter().map(Vec::len).collect::<Vec<_>>()
        )));
    }
    let m = SquareMatrix::new(n, rows.into_iter().flatten().collect()).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(m)
}

pub fn parse_matrix(text: &str) -> Result<SquareMatrix, CliError> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('{') {
        let f: MatrixFile = serde_json::from_str(trimmed).map_err(|e| CliError::Usage(format!("bad matrix JSON: {e}")))?;
        return build(f.n, f.matrix);
    }
    let mut lines = trimmed.lines().map(str::trim).filter(|l| !l.is_empty());
    let n: usize = lines
        .next()
        .ok_or_else(|| CliError::Usage("empty matrix file".into()))?
        .parse()
        .map_err(|e| CliError::Usage(format!("first line must be n: {e}")))?;
    let rows = lines
        .map(|l| {
            l.split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| CliError::Usage(format!("bad entry {t:?}: {e}"))))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    build(n, rows)
}

pub fn read_matrix(path: &Path) -> Result<SquareMatrix, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("reading {}: {e}", path.display())))?;
    parse_matrix(&text)
}

/// The JSON form of `m`, readable by [`parse_matrix`].
pub fn matrix_json(m: &SquareMatrix) -> String {
    let rows: Vec<String> = m
        .rows()
        .iter()
        .map(|r| {
            let cells: Vec<String> = r.iter().map(|&x| permanental::report::format_f64(x)).collect();
            format!("[{}]", cells.join(","))
        })
        .collect();
    format!("{{\"n\":{},\"matrix\":[{}]}}", m.n(), rows.join(","))
}
