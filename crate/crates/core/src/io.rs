//! Text formats: kernel files, f-vectors, step grids, float output.
//!
//! Kernel file:
//!
//! ```text
//! n 3 time_unit 1
//! 0.3 0.4 0
//! 0.3 0.3 0.3
//! 0 0.4 0.5
//! ```
//!
//! Blank lines and lines starting with `#` are ignored.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::markov::SubStochasticKernel;
use crate::models::MAX_STATES;

/// Largest grid a text spec may expand to.
pub const MAX_GRID_LEN: usize = 1 << 20;

/// 17 significant digits; round-trips every finite f64.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn parse_entry(token: &str, line: usize) -> Result<f64> {
    let v: f64 = token.parse().map_err(|_| parse_error(line, format!("`{token}` is not a number")))?;
    if !v.is_finite() {
        return Err(parse_error(line, format!("entry `{token}` is not finite")));
    }
    if v < 0.0 {
        return Err(parse_error(line, format!("entry {token} is negative")));
    }
    Ok(v)
}

pub fn parse_kernel(text: &str) -> Result<SubStochasticKernel> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (header_line, header) = lines.next().ok_or_else(|| parse_error(1, "empty kernel file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let (n, time_unit) = match fields.as_slice() {
        ["n", n, "time_unit", tu] => {
            let n: usize =
                n.parse().map_err(|_| parse_error(header_line, format!("`{n}` is not a state count")))?;
            let tu: f64 =
                tu.parse().map_err(|_| parse_error(header_line, format!("`{tu}` is not a time unit")))?;
            (n, tu)
        }
        _ => return Err(parse_error(header_line, "expected `n <n> time_unit <float>`")),
    };
    if n == 0 || n > MAX_STATES {
        return Err(parse_error(header_line, format!("n must be in 1..={MAX_STATES}, got {n}")));
    }
    if !(time_unit > 0.0 && time_unit.is_finite()) {
        return Err(parse_error(header_line, format!("time_unit must be positive, got {time_unit}")));
    }

    let mut data = Vec::with_capacity(n * n);
    let mut last_line = header_line;
    for row in 0..n {
        let (line, text) = lines
            .next()
            .ok_or_else(|| parse_error(last_line + 1, format!("expected {n} rows, found {row}")))?;
        last_line = line;
        let before = data.len();
        for token in text.split_whitespace() {
            data.push(parse_entry(token, line)?);
        }
        if data.len() - before != n {
            return Err(parse_error(line, format!("expected {n} entries, found {}", data.len() - before)));
        }
        let sum: f64 = data[before..].iter().sum();
        if sum > 1.0 + crate::markov::ROW_SUM_TOL {
            return Err(parse_error(line, format!("row sum {sum} exceeds 1")));
        }
    }
    if let Some((line, _)) = lines.next() {
        return Err(parse_error(line, "trailing content after the last row"));
    }
    let matrix = Matrix::from_vec(n, data)?;
    SubStochasticKernel::new(matrix, time_unit)
}

pub fn write_kernel(kernel: &SubStochasticKernel) -> String {
    let mut out = format!("n {} time_unit {}\n", kernel.n(), format_float(kernel.time_unit()));
    for row in kernel.matrix().rows() {
        let line: Vec<String> = row.iter().map(|&v| format_float(v)).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Comma- or whitespace-separated finite floats.
pub fn parse_vector(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        for token in line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            let v: f64 = token.parse().map_err(|_| parse_error(i + 1, format!("`{token}` is not a number")))?;
            if !v.is_finite() {
                return Err(parse_error(i + 1, format!("`{token}` is not finite")));
            }
            out.push(v);
        }
    }
    if out.is_empty() {
        return Err(parse_error(1, "empty vector"));
    }
    Ok(out)
}

/// Step grid: `a..b` (inclusive), `a..b:step`, or a comma list.
pub fn parse_grid(text: &str) -> Result<Vec<usize>> {
    let text = text.trim();
    let int = |s: &str| -> Result<usize> {
        s.trim().parse().map_err(|_| parse_error(1, format!("`{}` is not a step count", s.trim())))
    };
    let grid: Vec<usize> = if let Some((a, rest)) = text.split_once("..") {
        let (b, step) = match rest.split_once(':') {
            Some((b, s)) => (int(b)?, int(s)?),
            None => (int(rest)?, 1),
        };
        let a = int(a)?;
        if step == 0 {
            return Err(parse_error(1, "grid step must be positive"));
        }
        if b < a {
            return Err(parse_error(1, format!("empty range {a}..{b}")));
        }
        if (b - a) / step >= MAX_GRID_LEN {
            return Err(parse_error(1, format!("grid longer than {MAX_GRID_LEN} points")));
        }
        (a..=b).step_by(step).collect()
    } else {
        text.split(',').map(int).collect::<Result<_>>()?
    };
    if grid.is_empty() {
        return Err(parse_error(1, "empty grid"));
    }
    Ok(grid)
}

/// Maps a TOML error to a line-numbered parse error.
pub fn toml_error(text: &str, e: &toml::de::Error) -> Error {
    let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1).unwrap_or(1);
    parse_error(line, e.message().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::w3;
    use proptest::prelude::*;

    #[test]
    fn kernel_round_trip() {
        let k = w3();
        assert_eq!(parse_kernel(&write_kernel(&k)).unwrap(), k);
        assert_eq!(k.matrix().row(1), &[0.3, 0.3, 0.3]);
    }

    #[test]
    fn kernel_diagnostics_carry_line_numbers() {
        let line_of = |text: &str| match parse_kernel(text) {
            Err(Error::Parse { line, .. }) => line,
            other => panic!("expected parse error, got {other:?}"),
        };
        assert_eq!(line_of("n 2 time_unit 1\n0.5 0.1\n0.1 NaN\n"), 3);
        assert_eq!(line_of("n 2 time_unit 1\n0.5 -0.1\n0.1 0.5\n"), 2);
        assert_eq!(line_of("n 2 time_unit 1\n0.5 0.1\n0.1\n"), 3);
        assert_eq!(line_of("n 2 time_unit 1\n0.5 0.1\n"), 3);
        assert_eq!(line_of("# comment\nn 2 time_unit 0\n"), 2);
        assert_eq!(line_of("n 1 time_unit 1\n0.5\n0.5\n"), 3);
        assert_eq!(line_of("n 2 time_unit 1\n0.9 0.9\n0.1 0.1\n"), 2);
        assert_eq!(line_of(""), 1);
        assert_eq!(line_of("size 2\n"), 1);
    }

    #[test]
    fn structural_failures_are_not_parse_errors() {
        let periodic = "n 2 time_unit 1\n0 0.5\n0.5 0\n";
        assert!(matches!(parse_kernel(periodic), Err(Error::NotPrimitive { .. })));
        let stochastic = "n 1 time_unit 1\n1\n";
        assert!(matches!(parse_kernel(stochastic), Err(Error::InvalidKernel(_))));
    }

    #[test]
    fn vectors_and_grids() {
        assert_eq!(parse_vector("1, 0,-2.5\n").unwrap(), vec![1.0, 0.0, -2.5]);
        assert!(parse_vector("1,inf").is_err());
        assert!(parse_vector("").is_err());
        assert_eq!(parse_grid("3..6").unwrap(), vec![3, 4, 5, 6]);
        assert_eq!(parse_grid("0..10:5").unwrap(), vec![0, 5, 10]);
        assert_eq!(parse_grid("7, 2,9").unwrap(), vec![7, 2, 9]);
        assert!(parse_grid("5..2").is_err());
        assert!(parse_grid("1..9:0").is_err());
        assert!(parse_grid("0..99999999999").is_err());
        assert!(parse_grid("a").is_err());
    }

    #[test]
    fn float_format_has_17_digits() {
        assert_eq!(format_float(0.1), "1.0000000000000001e-1");
        assert_eq!(format_float(f64::INFINITY), "inf");
    }

    proptest! {
        #[test]
        fn formatted_floats_round_trip(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL) {
            prop_assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
        }

        #[test]
        fn parser_never_panics(text in "[ n0-9.e\\-#a-z_\n]{0,64}") {
            let _ = parse_kernel(&text);
            let _ = parse_grid(&text);
            let _ = parse_vector(&text);
        }
    }
}
