//! The canonical CSV layout: `z` or `p`, `x_<j>` covariates, `a_<j>`
//! auxiliary features and an optional 0/1 ground-truth column `h`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use neurt_fdr_core::numerics::p_to_z;
use neurt_fdr_core::pipeline::{Method, Problem};
use neurt_fdr_core::simgen::SyntheticDataset;
use neurt_fdr_core::Matrix;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DataFile {
    pub z: Vec<f64>,
    /// Present when the file carried a `p` column.
    pub p: Option<Vec<f64>>,
    pub x: Option<Matrix>,
    pub x_aux: Option<Matrix>,
    pub h: Option<Vec<bool>>,
    /// True when `z` was read directly rather than converted from `p`.
    pub has_z: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Z,
    P,
    H,
    X(usize),
    A(usize),
}

fn parse_role(name: &str) -> Option<Role> {
    let index = |rest: &str| rest.parse::<usize>().ok();
    match name {
        "z" => Some(Role::Z),
        "p" => Some(Role::P),
        "h" => Some(Role::H),
        _ => {
            if let Some(rest) = name.strip_prefix("x_") {
                index(rest).map(Role::X)
            } else if let Some(rest) = name.strip_prefix("a_") {
                index(rest).map(Role::A)
            } else {
                None
            }
        }
    }
}

fn range_label(prefix: &str, idx: &[usize]) -> Option<String> {
    match idx {
        [] => None,
        [only] => Some(format!("{prefix}_{only}")),
        [first, .., last] => Some(format!("{prefix}_{first}..{prefix}_{last} ({} columns)", idx.len())),
    }
}

fn parse_cell(cell: &str, column: &str, row: usize) -> Result<f64> {
    let v: f64 = cell
        .trim()
        .parse()
        .map_err(|_| CliError::Input(format!("row {row}, column `{column}`: `{cell}` is not a number")))?;
    if !v.is_finite() {
        return Err(CliError::Input(format!("row {row}, column `{column}`: non-finite value")));
    }
    Ok(v)
}

fn parse_truth(cell: &str, row: usize) -> Result<bool> {
    match cell.trim() {
        "1" | "true" => Ok(true),
        "0" | "false" => Ok(false),
        other => Err(CliError::Input(format!("row {row}, column `h`: expected 0 or 1, got `{other}`"))),
    }
}

impl DataFile {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// Human-readable list of the column roles present.
    pub fn roles(&self) -> String {
        let mut out = Vec::new();
        if self.has_z {
            out.push("z".to_string());
        }
        if self.p.is_some() {
            out.push("p".to_string());
        }
        let cols = |m: &Option<Matrix>| (1..=m.as_ref().map_or(0, |m| m.cols())).collect::<Vec<_>>();
        out.extend(range_label("x", &cols(&self.x)));
        out.extend(range_label("a", &cols(&self.x_aux)));
        if self.h.is_some() {
            out.push("h".to_string());
        }
        out.join(", ")
    }

    /// Checks that the columns a method needs are present.
    pub fn require(&self, method: Method) -> Result<()> {
        if method.needs_covariates() && self.x.is_none() {
            return Err(CliError::Input(format!(
                "test-level covariates required: {method} needs x_<j> columns (roles found: {})",
                self.roles()
            )));
        }
        if method.needs_aux() && self.x_aux.is_none() {
            return Err(CliError::Input(format!(
                "auxiliary covariates required: {method} needs a_<j> columns (roles found: {})",
                self.roles()
            )));
        }
        Ok(())
    }

    pub fn problem(&self) -> Problem<'_> {
        Problem {
            z: &self.z,
            p: self.p.as_deref(),
            x: self.x.as_ref(),
            x_aux: self.x_aux.as_ref(),
        }
    }
}

/// Reads a data file. `p` columns are converted to `z` with the given
/// sidedness when no `z` column is present.
pub fn read_data<R: Read>(reader: R, two_sided: bool) -> Result<DataFile> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| CliError::Input(format!("cannot read header: {e}")))?
        .clone();
    let mut roles = Vec::with_capacity(header.len());
    for name in header.iter() {
        let role = parse_role(name).ok_or_else(|| {
            CliError::Input(format!("unrecognised column `{name}` (expected z, p, h, x_<j> or a_<j>)"))
        })?;
        if roles.contains(&role) {
            return Err(CliError::Input(format!("duplicate column `{name}`")));
        }
        roles.push(role);
    }
    let has_z = roles.contains(&Role::Z);
    let has_p = roles.contains(&Role::P);
    if !has_z && !has_p {
        return Err(CliError::Input(format!(
            "a `z` or `p` column is required (columns found: {})",
            header.iter().collect::<Vec<_>>().join(", ")
        )));
    }
    // column order within each covariate block follows the numeric suffix
    let ordered = |pick: fn(Role) -> Option<usize>| {
        let mut v: Vec<(usize, usize)> = roles.iter().enumerate().filter_map(|(c, &r)| pick(r).map(|j| (j, c))).collect();
        v.sort_unstable();
        v.into_iter().map(|(_, c)| c).collect::<Vec<_>>()
    };
    let x_cols = ordered(|r| if let Role::X(j) = r { Some(j) } else { None });
    let a_cols = ordered(|r| if let Role::A(j) = r { Some(j) } else { None });

    let mut z = Vec::new();
    let mut p = Vec::new();
    let mut h = Vec::new();
    let mut x = Vec::new();
    let mut a = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| CliError::Input(format!("malformed row {row}: {e}")))?;
        for (c, cell) in record.iter().enumerate() {
            match roles[c] {
                Role::Z => z.push(parse_cell(cell, "z", row)?),
                Role::P => {
                    let v = parse_cell(cell, "p", row)?;
                    if !(0.0..=1.0).contains(&v) {
                        return Err(CliError::Input(format!("row {row}, column `p`: {v} is outside [0, 1]")));
                    }
                    p.push(v);
                }
                Role::H => h.push(parse_truth(cell, row)?),
                Role::X(_) | Role::A(_) => {}
            }
        }
        for &c in &x_cols {
            x.push(parse_cell(&record[c], &header[c], row)?);
        }
        for &c in &a_cols {
            a.push(parse_cell(&record[c], &header[c], row)?);
        }
    }
    let n = z.len().max(p.len());
    if n == 0 {
        return Err(CliError::Input("data file has no rows".into()));
    }
    if !has_z {
        // p = 0 maps to the clamped extreme of the conversion
        z = p
            .iter()
            .map(|&v| p_to_z(v.max(f64::MIN_POSITIVE), two_sided))
            .collect::<neurt_fdr_core::Result<_>>()?;
    }
    let block = |data: Vec<f64>, cols: usize| -> Result<Option<Matrix>> {
        if cols == 0 {
            Ok(None)
        } else {
            Ok(Some(Matrix::new(n, cols, data)?))
        }
    };
    Ok(DataFile {
        z,
        p: has_p.then_some(p),
        x: block(x, x_cols.len())?,
        x_aux: block(a, a_cols.len())?,
        h: roles.contains(&Role::H).then_some(h),
        has_z,
    })
}

pub fn read_data_path(path: &Path, two_sided: bool) -> Result<DataFile> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    read_data(BufReader::new(file), two_sided)
}

/// Writes a synthetic dataset with its ground truth.
pub fn write_dataset<W: Write>(writer: W, data: &SyntheticDataset) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["z".to_string()];
    header.extend((1..=data.x.cols()).map(|j| format!("x_{j}")));
    header.extend((1..=data.x_aux.cols()).map(|j| format!("a_{j}")));
    header.push("h".to_string());
    let to_input = |e: csv::Error| CliError::Input(format!("cannot write dataset: {e}"));
    wtr.write_record(&header).map_err(to_input)?;
    let mut record = Vec::with_capacity(header.len());
    for i in 0..data.len() {
        record.clear();
        record.push(data.z[i].to_string());
        record.extend(data.x.row(i).iter().map(f64::to_string));
        record.extend(data.x_aux.row(i).iter().map(f64::to_string));
        record.push(if data.h[i] { "1" } else { "0" }.to_string());
        wtr.write_record(&record).map_err(to_input)?;
    }
    wtr.flush().map_err(|e| CliError::Input(format!("cannot write dataset: {e}")))?;
    Ok(())
}

pub fn write_dataset_path(path: &Path, data: &SyntheticDataset) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_dataset(&mut w, data)?;
    w.flush().map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_roles_in_suffix_order() {
        let csv = "h,x_2,z,x_1,a_1\n1,20,1.5,10,7\n0,21,-0.5,11,8\n";
        let d = read_data(csv.as_bytes(), true).unwrap();
        assert_eq!(d.z, vec![1.5, -0.5]);
        let x = d.x.unwrap();
        assert_eq!(x.row(0), &[10.0, 20.0]);
        assert_eq!(d.x_aux.unwrap().row(1), &[8.0]);
        assert_eq!(d.h, Some(vec![true, false]));
        assert!(d.p.is_none());
    }

    #[test]
    fn p_column_is_converted() {
        let d = read_data("p\n0.05\n1\n0\n".as_bytes(), true).unwrap();
        assert!((d.z[0] - 1.959963984540054).abs() < 1e-9);
        assert_eq!(d.z[1], 0.0);
        assert!(d.z[2].is_finite() && d.z[2] > 7.0);
        assert_eq!(d.p.as_deref(), Some(&[0.05, 1.0, 0.0][..]));
        let one = read_data("p\n0.05\n".as_bytes(), false).unwrap();
        assert!((one.z[0] - 1.6448536269514722).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_files() {
        let err = |s: &str| read_data(s.as_bytes(), true).unwrap_err().to_string();
        assert!(err("x_1\n1\n").contains("`z` or `p` column is required"));
        assert!(err("z,w\n1,2\n").contains("unrecognised column `w`"));
        assert!(err("z,z\n1,2\n").contains("duplicate"));
        assert!(err("z\nabc\n").contains("row 1"));
        assert!(err("z,x_1\n1,2\n3\n").contains("malformed row 2"));
        assert!(err("p\n1.5\n").contains("outside"));
        assert!(err("z,h\n1,2\n").contains("expected 0 or 1"));
        assert!(err("z\n").contains("no rows"));
        assert!(err("z\nNaN\n").contains("non-finite"));
    }

    #[test]
    fn missing_aux_is_named() {
        let d = read_data("z,x_1,x_2\n1,2,3\n".as_bytes(), true).unwrap();
        assert!(d.require(Method::NnOnly).is_ok());
        let msg = d.require(Method::NeurtA).unwrap_err().to_string();
        assert!(msg.contains("auxiliary covariates required"));
        assert!(msg.contains("x_1..x_2"));
        assert!(d.require(Method::Bh).is_ok());
    }
}
