//! Dense matrices and the textual parameter snapshot format.
//!
//! A snapshot is a `params 1` header followed, per matrix, by a
//! `mat <name> <rows> <cols>` line and `rows` lines of `cols` decimal floats
//! written with 17 significant digits, which round-trips every `f64` exactly.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ParamsError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("unsupported params version `{0}`")]
    Version(String),
    #[error("expected matrix `{expected}`, found `{found}`")]
    UnexpectedMatrix { expected: String, found: String },
    #[error("matrix `{name}` has shape {rows}x{cols}, expected {want_rows}x{want_cols}")]
    Shape { name: String, rows: usize, cols: usize, want_rows: usize, want_cols: usize },
    #[error("flat parameter vector has length {found}, expected {expected}")]
    FlatLength { expected: usize, found: usize },
    #[error("parameter `{0}` is not finite")]
    NonFinite(String),
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<S = f64> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Copy> Matrix<S> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols + c]
    }

    pub fn map<T>(&self, f: &mut impl FnMut(S) -> T) -> Matrix<T> {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }
}

impl Matrix<f64> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Something made of an ordered list of named matrices.
pub trait ParamBundle: Sized {
    fn named(&self) -> Vec<(&'static str, &Matrix)>;

    /// Rebuilds the bundle from matrices in [`ParamBundle::named`] order,
    /// checking shapes against `self`.
    fn with_matrices(&self, mats: Vec<Matrix>) -> Result<Self, ParamsError>;

    fn flatten(&self) -> Vec<f64> {
        self.named().iter().flat_map(|(_, m)| m.data().iter().copied()).collect()
    }

    fn len_flat(&self) -> usize {
        self.named().iter().map(|(_, m)| m.data.len()).sum()
    }

    fn with_flat(&self, flat: &[f64]) -> Result<Self, ParamsError> {
        let expected = self.len_flat();
        if flat.len() != expected {
            return Err(ParamsError::FlatLength { expected, found: flat.len() });
        }
        let mut offset = 0;
        let mats = self
            .named()
            .iter()
            .map(|(_, m)| {
                let n = m.data.len();
                let out = Matrix::from_vec(m.rows, m.cols, flat[offset..offset + n].to_vec());
                offset += n;
                out
            })
            .collect();
        self.with_matrices(mats)
    }

    fn to_text(&self) -> String {
        write_matrices(&self.named())
    }

    /// Parses a snapshot whose matrix names and shapes match `self`.
    fn from_text_like(&self, text: &str) -> Result<Self, ParamsError> {
        let parsed = read_matrices(text)?;
        let template = self.named();
        if parsed.len() != template.len() {
            return Err(ParamsError::Syntax {
                line: 0,
                reason: format!("expected {} matrices, found {}", template.len(), parsed.len()),
            });
        }
        let mut mats = Vec::with_capacity(parsed.len());
        for ((name, m), (want_name, want)) in parsed.into_iter().zip(template) {
            if name != want_name {
                return Err(ParamsError::UnexpectedMatrix { expected: want_name.into(), found: name });
            }
            check_shape(&name, &m, want.rows, want.cols)?;
            mats.push(m);
        }
        self.with_matrices(mats)
    }
}

pub(crate) fn check_shape(name: &str, m: &Matrix, rows: usize, cols: usize) -> Result<(), ParamsError> {
    if m.rows != rows || m.cols != cols {
        return Err(ParamsError::Shape {
            name: name.into(),
            rows: m.rows,
            cols: m.cols,
            want_rows: rows,
            want_cols: cols,
        });
    }
    if m.data.iter().any(|v| !v.is_finite()) {
        return Err(ParamsError::NonFinite(name.into()));
    }
    Ok(())
}

pub fn write_matrices(mats: &[(&str, &Matrix)]) -> String {
    let mut out = String::from("params 1\n");
    for (name, m) in mats {
        let _ = writeln!(out, "mat {} {} {}", name, m.rows, m.cols);
        for r in 0..m.rows {
            let row: Vec<String> = m.row(r).iter().map(|v| format!("{v:.16e}")).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    }
    out
}

pub fn read_matrices(text: &str) -> Result<Vec<(String, Matrix)>, ParamsError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, "params 1")) => {}
        Some((_, l)) if l.starts_with("params ") => {
            return Err(ParamsError::Version(l["params ".len()..].to_string()))
        }
        Some((line, _)) => return Err(ParamsError::Syntax { line, reason: "missing `params 1` header".into() }),
        None => return Err(ParamsError::Syntax { line: 1, reason: "empty snapshot".into() }),
    }
    let mut out = Vec::new();
    while let Some((line, header)) = lines.next() {
        let parts: Vec<&str> = header.split(' ').collect();
        let bad = |reason: &str| ParamsError::Syntax { line, reason: reason.into() };
        if parts.len() != 4 || parts[0] != "mat" {
            return Err(bad("expected `mat <name> <rows> <cols>`"));
        }
        let rows: usize = parts[2].parse().map_err(|_| bad("bad row count"))?;
        let cols: usize = parts[3].parse().map_err(|_| bad("bad column count"))?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (line, row) = lines
                .next()
                .ok_or(ParamsError::Syntax { line: line + 1, reason: "truncated matrix".into() })?;
            let before = data.len();
            for field in row.split(' ') {
                let v: f64 = field
                    .parse()
                    .map_err(|_| ParamsError::Syntax { line, reason: format!("bad float `{field}`") })?;
                data.push(v);
            }
            if data.len() - before != cols {
                return Err(ParamsError::Syntax { line, reason: format!("expected {cols} values") });
            }
        }
        out.push((parts[1].to_string(), Matrix::from_vec(rows, cols, data)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_form_round_trips_bit_exactly() {
        let values = vec![0.1, -1.0 / 3.0, 1e-300, f64::MAX, 5e-324, -0.0, 123456.789];
        let m = Matrix::from_vec(1, values.len(), values.clone());
        let text = write_matrices(&[("m", &m)]);
        let back = read_matrices(&text).unwrap();
        let got = back[0].1.data();
        for (a, b) in values.iter().zip(got) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn rejects_other_versions_and_ragged_rows() {
        assert_eq!(read_matrices("params 2\n"), Err(ParamsError::Version("2".into())));
        let err = read_matrices("params 1\nmat a 1 2\n1.0\n").unwrap_err();
        assert!(matches!(err, ParamsError::Syntax { line: 3, .. }));
    }
}
