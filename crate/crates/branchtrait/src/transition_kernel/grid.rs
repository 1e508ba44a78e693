use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridSource {
    MonteCarlo,
    Spectral,
    Nonparametric,
    Quadrature,
}

/// Values q(x_i, y_j) on a rectangular grid, stored row by row (one row per x).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionGrid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub values: Vec<f64>,
    pub source: GridSource,
    /// Free-form description of how the values were produced.
    #[serde(default)]
    pub parameters: serde_json::Value,
}

fn check_axis(axis: &[f64], name: &str) -> Result<()> {
    if axis.is_empty() {
        return Err(Error::Data(format!("{name}-grid is empty")));
    }
    if axis.iter().any(|v| !v.is_finite()) || axis.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Data(format!("{name}-grid must be finite and strictly increasing")));
    }
    Ok(())
}

impl TransitionGrid {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, values: Vec<f64>, source: GridSource) -> Result<Self> {
        check_axis(&xs, "x")?;
        check_axis(&ys, "y")?;
        if values.len() != xs.len() * ys.len() {
            return Err(Error::Data(format!(
                "{} values for a {}x{} grid",
                values.len(),
                xs.len(),
                ys.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Data(format!("grid value {v} is not a finite non-negative number")));
        }
        Ok(Self { xs, ys, values, source, parameters: serde_json::Value::Null })
    }

    /// Evaluates `f` at every node, in parallel over rows.
    pub fn fill<F>(xs: Vec<f64>, ys: Vec<f64>, source: GridSource, f: F) -> Result<Self>
    where
        F: Fn(f64, f64) -> Result<f64> + Sync,
    {
        let rows: Vec<Vec<f64>> = xs
            .par_iter()
            .map(|&x| ys.iter().map(|&y| f(x, y)).collect::<Result<Vec<f64>>>())
            .collect::<Result<_>>()?;
        Self::new(xs, ys, rows.concat(), source)
    }

    pub fn with_parameters(mut self, parameters: serde_json::Value) -> Self {
        self.parameters = parameters;
        self
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ys.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.ys.len();
        &self.values[i * n..(i + 1) * n]
    }

    /// Header "x/y", y_1, ..., y_n; then one line x_i, q(x_i, y_1), ...
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_grid_csv(&self.xs, &self.ys, &self.values, out)
    }

    pub fn read_csv<R: Read>(input: R, source: GridSource) -> Result<Self> {
        let (xs, ys, values) = read_grid_csv(input)?;
        Self::new(xs, ys, values, source)
    }

    /// JSON sidecar: everything except the values.
    pub fn sidecar(&self) -> serde_json::Value {
        serde_json::json!({
            "source": self.source,
            "x_points": self.xs.len(),
            "y_points": self.ys.len(),
            "x_range": [self.xs[0], self.xs[self.xs.len() - 1]],
            "y_range": [self.ys[0], self.ys[self.ys.len() - 1]],
            "parameters": self.parameters,
        })
    }
}

fn csv_err(e: csv::Error) -> Error {
    let row = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse { row, message: e.to_string() }
}

pub(crate) fn write_grid_csv<W: Write>(xs: &[f64], ys: &[f64], values: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["x/y".to_string()];
    header.extend(ys.iter().map(|y| y.to_string()));
    w.write_record(&header).map_err(csv_err)?;
    for (i, x) in xs.iter().enumerate() {
        let mut rec = vec![x.to_string()];
        rec.extend(values[i * ys.len()..(i + 1) * ys.len()].iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn read_grid_csv<R: Read>(input: R) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
    let mut rows = r.records();
    let parse = |s: &str, row: usize| {
        s.trim().parse::<f64>().map_err(|_| Error::Parse { row, message: format!("not a number: {s:?}") })
    };
    let header = rows.next().ok_or(Error::Parse { row: 1, message: "empty grid file".into() })?.map_err(csv_err)?;
    if header.get(0) != Some("x/y") {
        return Err(Error::Parse { row: 1, message: "first header cell must be \"x/y\"".into() });
    }
    let ys = header.iter().skip(1).map(|s| parse(s, 1)).collect::<Result<Vec<_>>>()?;
    let mut xs = Vec::new();
    let mut values = Vec::new();
    for (k, rec) in rows.enumerate() {
        let row = k + 2;
        let rec = rec.map_err(csv_err)?;
        if rec.len() != ys.len() + 1 {
            return Err(Error::Parse { row, message: format!("expected {} fields, found {}", ys.len() + 1, rec.len()) });
        }
        xs.push(parse(&rec[0], row)?);
        for s in rec.iter().skip(1) {
            values.push(parse(s, row)?);
        }
    }
    Ok((xs, ys, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let g = TransitionGrid::fill(vec![0.1, 0.2, 0.7], vec![0.0, 1.0 / 3.0], GridSource::Quadrature, |x, y| {
            Ok(x * x + y + 1e-17)
        })
        .unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x/y,0,0.3333333333333333\n"));
        let back = TransitionGrid::read_csv(&buf[..], GridSource::Quadrature).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn rejects_negative_values_and_bad_rows() {
        assert!(TransitionGrid::new(vec![0.0], vec![0.0], vec![-1.0], GridSource::Spectral).is_err());
        assert!(TransitionGrid::new(vec![0.0, 0.0], vec![0.0], vec![1.0, 1.0], GridSource::Spectral).is_err());
        let bad = "x/y,0,1\n0.5,1,2\n0.6,1\n";
        match TransitionGrid::read_csv(bad.as_bytes(), GridSource::Spectral) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("{other:?}"),
        }
    }
}
