//! Observation series and their CSV form (`t,y` header, one row per time).

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub y: Vec<f64>,
    /// Parameters that generated the series, when simulated.
    pub truth: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, y: Vec<f64>) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::config("data", "a dataset needs at least one observation"));
        }
        Ok(Self {
            name: name.into(),
            y,
            truth: None,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Checks that every observation is an integer count in `0..=trials`.
    pub fn check_counts(&self, trials: u32) -> Result<()> {
        for (t, &y) in self.y.iter().enumerate() {
            if y.fract() != 0.0 || y < 0.0 || y > f64::from(trials) {
                return Err(Error::Ingest {
                    line: t + 2,
                    message: format!("count {y} outside 0..={trials}"),
                });
            }
        }
        Ok(())
    }

    pub fn read_csv(reader: impl Read, name: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut records = rdr.records();
        match records.next() {
            Some(Ok(h)) if h.len() == 2 && &h[0] == "t" && &h[1] == "y" => {}
            Some(Ok(h)) => {
                return Err(Error::Ingest {
                    line: 1,
                    message: format!(
                        "expected header `t,y`, found `{}`",
                        h.iter().collect::<Vec<_>>().join(",")
                    ),
                })
            }
            Some(Err(e)) => return Err(csv_error(e, 1)),
            None => {
                return Err(Error::Ingest {
                    line: 1,
                    message: "missing header `t,y`".into(),
                })
            }
        }
        let mut y = Vec::new();
        for rec in records {
            let rec = rec.map_err(|e| csv_error(e, y.len() + 2))?;
            let line = rec.position().map_or(y.len() + 2, |p| p.line() as usize);
            if rec.len() != 2 {
                return Err(Error::Ingest {
                    line,
                    message: format!("expected 2 fields, found {}", rec.len()),
                });
            }
            let t: usize = rec[0].parse().map_err(|_| Error::Ingest {
                line,
                message: format!("bad time index `{}`", &rec[0]),
            })?;
            if t != y.len() + 1 {
                return Err(Error::Ingest {
                    line,
                    message: format!("time index {t} out of sequence, expected {}", y.len() + 1),
                });
            }
            let v: f64 = rec[1].parse().map_err(|_| Error::Ingest {
                line,
                message: format!("bad observation `{}`", &rec[1]),
            })?;
            if !v.is_finite() {
                return Err(Error::Ingest {
                    line,
                    message: format!("non-finite observation `{}`", &rec[1]),
                });
            }
            y.push(v);
        }
        if y.is_empty() {
            return Err(Error::Ingest {
                line: 2,
                message: "no observations".into(),
            });
        }
        Ok(Self {
            name: name.to_string(),
            y,
            truth: None,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("data");
        Self::read_csv(file, name)
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let mut out = String::with_capacity(self.y.len() * 26 + 4);
        out.push_str("t,y\n");
        for (t, &v) in self.y.iter().enumerate() {
            out.push_str(&format!("{},{}\n", t + 1, format_value(v)));
        }
        w.write_all(out.as_bytes())?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Decimal text with 17 significant digits; integral values are printed
/// without an exponent.
pub fn format_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:.16e}")
    }
}

fn csv_error(e: csv::Error, fallback_line: usize) -> Error {
    let line = e.position().map_or(fallback_line, |p| p.line() as usize);
    Error::Ingest {
        line,
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn three_rows() {
        let d = Dataset::read_csv("t,y\n1,0.5\n2,-1.25\n3,2\n".as_bytes(), "x").unwrap();
        assert_eq!(d.y, vec![0.5, -1.25, 2.0]);
    }

    #[test]
    fn missing_header_fails_on_line_one() {
        let err = Dataset::read_csv("1,0.5\n2,1.0\n".as_bytes(), "x").unwrap_err();
        assert_eq!(
            err,
            Error::Ingest {
                line: 1,
                message: "expected header `t,y`, found `1,0.5`".into()
            }
        );
    }

    #[test]
    fn malformed_row_reports_its_line() {
        let err = Dataset::read_csv("t,y\n1,0.5\n2,abc\n".as_bytes(), "x").unwrap_err();
        assert!(matches!(err, Error::Ingest { line: 3, .. }), "{err:?}");
        let err = Dataset::read_csv("t,y\n1,0.5\n3,1.0\n".as_bytes(), "x").unwrap_err();
        assert!(matches!(err, Error::Ingest { line: 3, .. }), "{err:?}");
        let err = Dataset::read_csv("t,y\n1,0.5,7\n".as_bytes(), "x").unwrap_err();
        assert!(matches!(err, Error::Ingest { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn counts_are_checked() {
        let d = Dataset::new("b", vec![0.0, 3.0, 5.0]).unwrap();
        assert!(d.check_counts(5).is_ok());
        assert!(d.check_counts(4).is_err());
        let d = Dataset::new("b", vec![1.5]).unwrap();
        assert!(d.check_counts(4).is_err());
    }

    proptest! {
        #[test]
        fn write_then_read_preserves_values(y in prop::collection::vec(-1e6f64..1e6, 1..50)) {
            let d = Dataset::new("p", y).unwrap();
            let mut buf = Vec::new();
            d.write_csv(&mut buf).unwrap();
            let back = Dataset::read_csv(buf.as_slice(), "p").unwrap();
            prop_assert_eq!(back.y, d.y);
        }
    }
}
