//! Plain-text matrix files: a `rows cols` header line followed by one line
//! per row of space-separated decimals. Values are written with 17
//! significant digits so that reading back reproduces every bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::DenseMatrix;
use crate::error::{Error, Result};

pub fn write_matrix(m: &DenseMatrix) -> String {
    let mut out = String::with_capacity(m.rows() * m.cols() * 25 + 16);
    let _ = writeln!(out, "{} {}", m.rows(), m.cols());
    for i in 0..m.rows() {
        let mut first = true;
        for x in m.row(i) {
            if !first {
                out.push(' ');
            }
            first = false;
            let _ = write!(out, "{x:.16e}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_matrix(text: &str) -> Result<DenseMatrix> {
    parse_with_path(text, None)
}

fn parse_with_path(text: &str, path: Option<&Path>) -> Result<DenseMatrix> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.map(Path::to_path_buf),
        line,
        msg,
    };
    // Blank lines are skipped but still counted for error reporting.
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let (hline, header) = lines
        .next()
        .ok_or_else(|| err(1, "empty input, expected `rows cols` header".into()))?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(err(hline, format!("expected `rows cols`, got `{header}`")));
    }
    let parse_dim = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| err(hline, format!("bad dimension `{s}`")))
    };
    let rows = parse_dim(dims[0])?;
    let cols = parse_dim(dims[1])?;

    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| err(hline + r + 1, format!("missing row {} of {rows}", r + 1)))?;
        let mut count = 0;
        for tok in line.split_whitespace() {
            let x: f64 = tok
                .parse()
                .map_err(|_| err(ln, format!("bad number `{tok}`")))?;
            if !x.is_finite() {
                return Err(err(ln, format!("non-finite value `{tok}`")));
            }
            data.push(x);
            count += 1;
        }
        if count != cols {
            return Err(err(ln, format!("expected {cols} values, found {count}")));
        }
    }
    if let Some((ln, _)) = lines.next() {
        return Err(err(ln, format!("unexpected content after {rows} rows")));
    }
    DenseMatrix::new(rows, cols, data)
}

pub fn write_matrix_file(path: &Path, m: &DenseMatrix) -> Result<()> {
    fs::write(path, write_matrix(m)).map_err(|e| Error::io(path, e))
}

pub fn read_matrix_file(path: &Path) -> Result<DenseMatrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_with_path(&text, Some(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn format_layout() {
        let m = DenseMatrix::from_rows(&[[1.0, -0.5]]).unwrap();
        assert_eq!(
            write_matrix(&m),
            "1 2\n1.0000000000000000e0 -5.0000000000000000e-1\n"
        );
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let e = parse_matrix("2 2\n1 2\n3 x\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e}");
        let e = parse_matrix("2 2\n1 2 3\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        let e = parse_matrix("2 2\n1 2\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e}");
        let e = parse_matrix("two 2\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }), "{e}");
        assert!(parse_matrix("1 1\n1\n2\n").is_err());
        assert!(parse_matrix("1 1\nNaN\n").is_err());
    }

    proptest! {
        #[test]
        fn roundtrip_is_bitwise(
            rows in 1usize..5,
            cols in 1usize..5,
            seed in prop::collection::vec(-1e300f64..1e300, 16),
            scale in prop::sample::select(vec![1e-300, 1e-12, 1.0, 3.0e7]),
        ) {
            let m = DenseMatrix::from_fn(rows, cols, |i, j| seed[(i * cols + j) % 16] * scale / 1e300);
            let back = parse_matrix(&write_matrix(&m)).unwrap();
            prop_assert_eq!(
                back.as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                m.as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>()
            );
        }
    }
}
