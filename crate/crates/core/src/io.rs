//! Coefficient CSV files and sampled-function files.
//!
//! Coefficients: one line per cube, `j:k1,...,kn, re1, im1, ..., rem, imm`.
//! Samples: a header `n, m, spacing`, a line with the origin, a line with the
//! extents, then one line `re1, im1, ..., rem, imm` per grid point in
//! row-major order. Lines starting with `#` are comments in both.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::dyadic::{DyadicCube, LatticeWindow};
use crate::error::{Error, Result};
use crate::seq::CoeffField;
use crate::wavelets::FunctionSample;

/// Non-blank, non-comment lines with their 1-based line numbers, split into fields.
fn records<R: Read>(mut r: R) -> Result<Vec<(u64, Vec<String>)>> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i as u64 + 1;
        if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
            continue;
        }
        let mut rd = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(raw.as_bytes());
        let rec = rd
            .records()
            .next()
            .transpose()
            .map_err(|e| Error::Parse(format!("line {line}: {e}")))?
            .unwrap_or_default();
        out.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok(out)
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().quote_style(csv::QuoteStyle::Never).from_writer(w)
}

fn csv_err(e: csv::Error) -> Error {
    match e.position() {
        Some(p) => Error::Parse(format!("line {}: {e}", p.line())),
        None => Error::Parse(e.to_string()),
    }
}

fn parse_f64(s: &str, line: u64, what: &str) -> Result<f64> {
    s.parse().map_err(|e| Error::Parse(format!("line {line}: {what} `{s}`: {e}")))
}

fn complex_pairs(fields: &[&str], line: u64) -> Result<Vec<Complex64>> {
    if fields.len() % 2 != 0 || fields.is_empty() {
        return Err(Error::Parse(format!("line {line}: expected re, im pairs, got {} numbers", fields.len())));
    }
    fields
        .chunks(2)
        .map(|p| Ok(Complex64::new(parse_f64(p[0], line, "real part")?, parse_f64(p[1], line, "imaginary part")?)))
        .collect()
}

/// The smallest window containing every cube.
pub fn covering_window(cubes: &[DyadicCube]) -> Result<LatticeWindow> {
    let first = cubes.first().ok_or_else(|| Error::Parse("no coefficients".into()))?;
    let dim = first.dim();
    let j_min = cubes.iter().map(|q| q.level()).min().unwrap();
    let j_max = cubes.iter().map(|q| q.level()).max().unwrap();
    let mut lo = vec![i64::MAX; dim];
    let mut hi = vec![i64::MIN; dim];
    for q in cubes {
        let a = q.ancestor(j_min);
        for (i, &k) in a.index().iter().enumerate() {
            lo[i] = lo[i].min(k);
            hi[i] = hi[i].max(k + 1);
        }
    }
    LatticeWindow::new(dim, j_min, j_max, lo, hi)
}

/// Read coefficients in dimension `dim`. The cube literal may be quoted or
/// spread over `dim` fields. Without a window the covering window is used.
pub fn read_coeffs<R: Read>(r: R, dim: usize, window: Option<&LatticeWindow>) -> Result<CoeffField> {
    let mut rows: Vec<(DyadicCube, Vec<Complex64>)> = Vec::new();
    let mut m = None;
    for (line, fields) in records(r)? {
        let fields: Vec<&str> = fields.iter().map(String::as_str).collect();
        let mut literal = fields[0].to_string();
        let mut used = 1;
        while literal.split(',').count() < dim && used < fields.len() {
            literal.push(',');
            literal.push_str(fields[used]);
            used += 1;
        }
        let q: DyadicCube = literal.parse().map_err(|e: Error| Error::Parse(format!("line {line}: {e}")))?;
        if q.dim() != dim {
            return Err(Error::Parse(format!("line {line}: cube {q} is not in dimension {dim}")));
        }
        let v = complex_pairs(&fields[used..], line)?;
        match m {
            None => m = Some(v.len()),
            Some(k) if k != v.len() => {
                return Err(Error::Parse(format!("line {line}: {} components where earlier lines have {k}", v.len())))
            }
            _ => {}
        }
        rows.push((q, v));
    }
    let m = m.ok_or_else(|| Error::Parse("no coefficients".into()))?;
    let window = match window {
        Some(w) => w.clone(),
        None => covering_window(&rows.iter().map(|r| r.0.clone()).collect::<Vec<_>>())?,
    };
    let mut field = CoeffField::new(window, m);
    for (q, v) in rows {
        field.insert(q, v)?;
    }
    Ok(field)
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub fn read_coeffs_file(path: &Path, dim: usize, window: Option<&LatticeWindow>) -> Result<CoeffField> {
    read_coeffs(open(path)?, dim, window).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Write the stored coefficients in cube order.
pub fn write_coeffs<W: Write>(field: &CoeffField, w: W) -> Result<()> {
    let mut wr = writer(w);
    for (q, v) in field.iter() {
        let mut rec: Vec<String> = q.to_string().split(',').map(str::to_string).collect();
        for z in v {
            rec.push(format!("{:e}", z.re));
            rec.push(format!("{:e}", z.im));
        }
        wr.write_record(&rec).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_sample<R: Read>(r: R) -> Result<FunctionSample> {
    let mut recs = records(r)?.into_iter();
    let mut next = |what: &str| -> Result<(Vec<String>, u64)> {
        let (line, rec) = recs.next().ok_or_else(|| Error::Parse(format!("sample file ends before the {what}")))?;
        Ok((rec, line))
    };
    let (head, line) = next("header")?;
    if head.len() != 3 {
        return Err(Error::Parse(format!("line {line}: header must be `n, m, spacing`")));
    }
    let n: usize = head[0].parse().map_err(|e| Error::Parse(format!("line {line}: n: {e}")))?;
    let m: usize = head[1].parse().map_err(|e| Error::Parse(format!("line {line}: m: {e}")))?;
    let spacing = parse_f64(&head[2], line, "spacing")?;
    let (origin, line) = next("origin")?;
    if origin.len() != n {
        return Err(Error::Parse(format!("line {line}: origin needs {n} entries")));
    }
    let origin = origin.iter().map(|s| parse_f64(s, line, "origin")).collect::<Result<Vec<_>>>()?;
    let (ext, line) = next("extents")?;
    if ext.len() != n {
        return Err(Error::Parse(format!("line {line}: extents need {n} entries")));
    }
    let extents = ext
        .iter()
        .map(|s| s.parse::<usize>().map_err(|e| Error::Parse(format!("line {line}: extent: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    let mut out = FunctionSample::zeros(m, origin, spacing, extents)?;
    let count = out.count();
    for i in 0..count {
        let (vals, line) = next("last grid point")?;
        let refs: Vec<&str> = vals.iter().map(String::as_str).collect();
        let v = complex_pairs(&refs, line)?;
        if v.len() != m {
            return Err(Error::Parse(format!("line {line}: expected {m} components, got {}", v.len())));
        }
        out.values[i * m..(i + 1) * m].copy_from_slice(&v);
    }
    if let Ok((_, line)) = next("end") {
        return Err(Error::Parse(format!("line {line}: more values than the {count} grid points")));
    }
    Ok(out)
}

pub fn read_sample_file(path: &Path) -> Result<FunctionSample> {
    read_sample(open(path)?).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_sample<W: Write>(f: &FunctionSample, w: W) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().flexible(true).quote_style(csv::QuoteStyle::Never).from_writer(w);
    wr.write_record([f.n.to_string(), f.m.to_string(), format!("{:e}", f.spacing)]).map_err(csv_err)?;
    wr.write_record(f.origin.iter().map(|x| format!("{x:e}"))).map_err(csv_err)?;
    wr.write_record(f.extents.iter().map(|e| e.to_string())).map_err(csv_err)?;
    for i in 0..f.count() {
        let rec: Vec<String> = f.value(i).iter().flat_map(|z| [format!("{:e}", z.re), format!("{:e}", z.im)]).collect();
        wr.write_record(&rec).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}
