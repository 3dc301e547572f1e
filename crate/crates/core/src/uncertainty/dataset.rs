use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Observations `(x, y)`: one row of features and one target per sample.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::invalid("dataset has no rows"));
        }
        let ds = Dataset { x, y };
        ds.check()?;
        Ok(ds)
    }

    /// An empty dataset of a fixed dimensionality, for incremental building.
    pub fn empty() -> Self {
        Dataset::default()
    }

    fn check(&self) -> Result<()> {
        if self.x.len() != self.y.len() {
            return Err(Error::invalid(format!(
                "{} feature rows but {} targets",
                self.x.len(),
                self.y.len()
            )));
        }
        let n = self.num_features();
        for (i, (row, y)) in self.x.iter().zip(&self.y).enumerate() {
            if row.len() != n {
                return Err(Error::invalid(format!(
                    "row {i} has {} features, expected {n}",
                    row.len()
                )));
            }
            if !row.iter().all(|v| v.is_finite()) || !y.is_finite() {
                return Err(Error::invalid(format!("row {i} contains non-finite values")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn push(&mut self, x: Vec<f64>, y: f64) -> Result<()> {
        if !self.is_empty() && x.len() != self.num_features() {
            return Err(Error::DimensionMismatch {
                expected: self.num_features(),
                got: x.len(),
            });
        }
        if !x.iter().all(|v| v.is_finite()) || !y.is_finite() {
            return Err(Error::invalid("non-finite observation"));
        }
        self.x.push(x);
        self.y.push(y);
        Ok(())
    }

    /// Reads a CSV with a header row: feature columns followed by one
    /// target column.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let width = rdr.headers()?.len();
        if width < 2 {
            return Err(Error::invalid(
                "dataset CSV needs at least one feature column and a target column",
            ));
        }
        let mut ds = Dataset::empty();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != width {
                return Err(Error::invalid(format!(
                    "data row {} has {} fields, expected {width}",
                    line + 1,
                    record.len()
                )));
            }
            let values = record
                .iter()
                .map(|f| {
                    f.parse::<f64>().map_err(|_| {
                        Error::invalid(format!("data row {}: cannot parse {f:?}", line + 1))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            let (xs, y) = values.split_at(width - 1);
            ds.push(xs.to_vec(), y[0])
                .map_err(|e| Error::invalid(format!("data row {}: {e}", line + 1)))?;
        }
        Ok(ds)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(f)
    }

    /// Writes the dataset with header `x0,...,x{n-1},y`.
    pub fn write_csv<W: Write>(&self, writer: W, num_features: usize) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..num_features).map(|i| format!("x{i}")).collect();
        header.push("y".into());
        w.write_record(&header)?;
        for (row, y) in self.x.iter().zip(&self.y) {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(y.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>, num_features: usize) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(f, num_features)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let ds = Dataset::new(vec![vec![0.1, -2.5], vec![1e-7, 3.0]], vec![0.3, 1.0 / 3.0]).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf, 2).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x0,x1,y\n"));
        let back = Dataset::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(Dataset::read_csv("a,y\n1,2\n3\n".as_bytes()).is_err());
        assert!(Dataset::read_csv("a,y\n1,nan\n".as_bytes()).is_err());
        assert!(Dataset::read_csv("a,y\n1,1,5\n".as_bytes()).is_err());
        assert!(Dataset::read_csv("y\n1\n".as_bytes()).is_err());
        assert!(Dataset::read_csv("a,y\n1,x\n".as_bytes()).is_err());
    }

    #[test]
    fn constructor_checks() {
        assert!(Dataset::new(vec![], vec![]).is_err());
        assert!(Dataset::new(vec![vec![1.0]], vec![]).is_err());
        assert!(Dataset::new(vec![vec![1.0], vec![1.0, 2.0]], vec![0.0, 0.0]).is_err());
        assert!(Dataset::new(vec![vec![f64::INFINITY]], vec![0.0]).is_err());
    }
}
