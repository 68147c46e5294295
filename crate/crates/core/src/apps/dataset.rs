//! Headerless numeric datasets: features, then the label in the last column.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::sampler::Streams;
use crate::table::{csv_err, format_f64, parse_record};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vector,
    pub source: Option<PathBuf>,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vector) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::dims("labels", features.nrows(), labels.len()));
        }
        if features.iter().chain(labels.iter()).any(|v| !v.is_finite()) {
            return Err(Error::contract("dataset has non-finite entries"));
        }
        Ok(Self { features, labels, source: None })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn example(&self, i: usize) -> Vector {
        self.features.row(i).transpose()
    }

    /// Errors unless every label is exactly `-1` or `+1`.
    pub fn check_binary(&self) -> Result<()> {
        match self.labels.iter().position(|&y| y != 1.0 && y != -1.0) {
            Some(i) => Err(Error::Parse { line: i + 1, message: format!("label {} is not -1 or +1", self.labels[i]) }),
            None => Ok(()),
        }
    }

    /// Rows `range` as a new dataset.
    pub fn slice(&self, start: usize, len: usize) -> Dataset {
        Dataset {
            features: self.features.rows(start, len).into_owned(),
            labels: self.labels.rows(start, len).into_owned(),
            source: self.source.clone(),
        }
    }

    /// Appends a constant-one feature column.
    pub fn with_bias(&self) -> Dataset {
        let (m, d) = self.features.shape();
        let features = Matrix::from_fn(m, d + 1, |i, j| if j < d { self.features[(i, j)] } else { 1.0 });
        Dataset { features, labels: self.labels.clone(), source: self.source.clone() }
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let line = i + 1;
            let row = parse_record(&rec, line)?;
            if row.len() < 2 {
                return Err(Error::Parse { line, message: "need at least one feature and a label".into() });
            }
            if let Some(first) = rows.first() {
                if first.len() != row.len() {
                    return Err(Error::Parse { line, message: format!("expected {} columns, found {}", first.len(), row.len()) });
                }
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::Parse { line, message: format!("non-finite value {v}") });
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Parse { line: 0, message: "empty dataset".into() });
        }
        let d = rows[0].len() - 1;
        let features = Matrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        let labels = Vector::from_iterator(rows.len(), rows.iter().map(|r| r[d]));
        Ok(Self { features, labels, source: None })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut d = Self::read_from(std::fs::File::open(path)?)?;
        d.source = Some(path.to_path_buf());
        Ok(d)
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        for i in 0..self.len() {
            let row = self.features.row(i).iter().chain(std::iter::once(&self.labels[i])).map(|v| format_f64(*v)).collect::<Vec<_>>();
            out.write_record(&row).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(std::fs::File::create(path)?)
    }
}

/// Two Gaussian blobs with unit-variance scale `spread` whose centers are
/// `separation` apart along the first axis; labels `-1` / `+1` with equal odds.
pub fn gaussian_blobs(n: usize, separation: f64, spread: f64, streams: &mut Streams) -> Dataset {
    let mut rng = streams.next_key().rng(0);
    let mut features = Matrix::zeros(n, 2);
    let mut labels = Vector::zeros(n);
    for i in 0..n {
        let y = if rng.random::<bool>() { 1.0 } else { -1.0 };
        features[(i, 0)] = y * separation / 2.0 + spread * rng.sample::<f64, _>(StandardNormal);
        features[(i, 1)] = spread * rng.sample::<f64, _>(StandardNormal);
        labels[i] = y;
    }
    Dataset { features, labels, source: None }
}

/// `x ~ U[-1, 1]`, target `amplitude sin(frequency x) + noise N(0, noise^2)`.
pub fn sine_regression(n: usize, amplitude: f64, frequency: f64, noise: f64, streams: &mut Streams) -> Dataset {
    let mut rng = streams.next_key().rng(0);
    let mut features = Matrix::zeros(n, 1);
    let mut labels = Vector::zeros(n);
    for i in 0..n {
        let x: f64 = rng.random_range(-1.0..=1.0);
        features[(i, 0)] = x;
        labels[i] = amplitude * (frequency * x).sin() + noise * rng.sample::<f64, _>(StandardNormal);
    }
    Dataset { features, labels, source: None }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_and_reports_bad_lines() {
        let d = Dataset::read_from("1,2,-1\n3.5,4,1\n".as_bytes()).unwrap();
        assert_eq!(d.features, Matrix::from_row_slice(2, 2, &[1.0, 2.0, 3.5, 4.0]));
        assert_eq!(d.labels, Vector::from_row_slice(&[-1.0, 1.0]));
        d.check_binary().unwrap();
        let err = Dataset::read_from("1,2,-1\n3,4\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err:?}");
        let err = Dataset::read_from("1,2,-1\n3,4,1\n5,abc,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
        let err = Dataset::read_from("1,nan,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err:?}");
        let err = Dataset::read_from("1,0.5\n".as_bytes()).unwrap().check_binary().unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    proptest! {
        #[test]
        fn round_trips_bit_exactly(vals in proptest::collection::vec(-1e6f64..1e6, 3..30)) {
            let m = vals.len() / 3;
            let features = Matrix::from_row_slice(m, 2, &vals[..2 * m]);
            let labels = Vector::from_row_slice(&vals[2 * m..3 * m]);
            let d = Dataset::new(features, labels).unwrap();
            let mut buf = Vec::new();
            d.write_to(&mut buf).unwrap();
            prop_assert_eq!(Dataset::read_from(buf.as_slice()).unwrap(), d);
        }
    }

    #[test]
    fn generators_are_seeded() {
        let a = gaussian_blobs(100, 4.0, 1.0, &mut Streams::new(3));
        assert_eq!(a, gaussian_blobs(100, 4.0, 1.0, &mut Streams::new(3)));
        assert_ne!(a, gaussian_blobs(100, 4.0, 1.0, &mut Streams::new(4)));
        a.check_binary().unwrap();
        let s = sine_regression(50, 1.0, std::f64::consts::PI, 0.0, &mut Streams::new(1));
        for i in 0..50 {
            assert!((s.labels[i] - (std::f64::consts::PI * s.features[(i, 0)]).sin()).abs() < 1e-15);
        }
    }
}
