//! CSV input/output and JSON with 17 significant digits.

use std::io::{Read, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::MissingSample;
use crate::simulate::Replication;
use crate::ustat::Sample;

/// A float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

struct Digits17;

impl serde_json::ser::Formatter for Digits17 {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> std::io::Result<()> {
        w.write_all(fmt_f64(v).as_bytes())
    }
    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> std::io::Result<()> {
        self.write_f64(w, v as f64)
    }
}

/// Compact JSON with every float written as `{:.16e}`.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Digits17);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("JSON output is UTF-8"))
}

fn header_index(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim() == name)
}

fn parse(field: &str, row: usize, col: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::Data(format!("row {row}: column {col}: cannot parse `{field}`")))?;
    if !v.is_finite() {
        return Err(Error::Data(format!("row {row}: column {col} is not finite")));
    }
    Ok(v)
}

/// Reads `x` (or `x1, x2, …`) and optional `y` columns; `y` defaults to 1.
pub fn read_sample<R: Read>(input: R) -> Result<Sample> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    let xcols: Vec<(usize, String)> = match header_index(&headers, "x") {
        Some(i) => vec![(i, "x".into())],
        None => {
            let mut v = Vec::new();
            while let Some(i) = header_index(&headers, &format!("x{}", v.len() + 1)) {
                v.push((i, format!("x{}", v.len() + 1)));
            }
            v
        }
    };
    if xcols.is_empty() {
        return Err(Error::Data("sample CSV needs an `x` or `x1` column".into()));
    }
    let ycol = header_index(&headers, "y");
    for h in headers.iter() {
        let h = h.trim();
        if h != "y" && !xcols.iter().any(|(_, n)| n == h) {
            return Err(Error::Data(format!("unknown column `{h}`")));
        }
    }
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for (i, name) in &xcols {
            x.push(parse(&rec[*i], r + 1, name)?);
        }
        y.push(match ycol {
            Some(i) => parse(&rec[i], r + 1, "y")?,
            None => 1.0,
        });
    }
    Sample::with_dim(xcols.len(), x, y).map_err(|e| Error::Data(e.to_string()))
}

/// Reads the missing-data schema `z, a, ya`.
pub fn read_missing<R: Read>(input: R) -> Result<MissingSample> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        header_index(&headers, name)
            .ok_or_else(|| Error::Data(format!("missing-data CSV needs a `{name}` column")))
    };
    let (iz, ia, iy) = (col("z")?, col("a")?, col("ya")?);
    if headers.len() != 3 {
        return Err(Error::Data("missing-data CSV has columns z, a, ya only".into()));
    }
    let (mut z, mut a, mut ya) = (Vec::new(), Vec::new(), Vec::new());
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        z.push(parse(&rec[iz], r + 1, "z")?);
        a.push(parse(&rec[ia], r + 1, "a")?);
        ya.push(parse(&rec[iy], r + 1, "ya")?);
    }
    MissingSample::new(z, a, ya)
}

/// One row per replication: `rep, statistic, u, v, linear, quadratic`.
pub fn write_replications<W: Write>(out: W, reps: &[Replication]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rep", "statistic", "u", "v", "linear", "quadratic"])?;
    for r in reps {
        w.write_record([
            r.rep.to_string(),
            fmt_f64(r.statistic),
            fmt_f64(r.u),
            fmt_f64(r.v),
            fmt_f64(r.linear),
            fmt_f64(r.quadratic),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a header and rows of floats.
pub fn write_table<W: Write>(out: W, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| fmt_f64(*v)))?;
    }
    w.flush()?;
    Ok(())
}
