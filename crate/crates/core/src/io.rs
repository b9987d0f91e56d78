//! File formats for signals.
//!
//! Binary record layout (all little-endian):
//!
//! ```text
//! "PKSG"  u8 version  u8 ndim  u64 × ndim dims  (f64 re, f64 im) × prod(dims)
//! ```
//!
//! A file may hold several records back to back (measurement vectors,
//! dictionary atoms). The CSV form has one row per sample: index columns
//! (`i` or `i,j`) followed by `re,im`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{PhaseError, Result};
use crate::signal::{for_each_index, Signal};

pub const MAGIC: &[u8; 4] = b"PKSG";
pub const VERSION: u8 = 1;

pub fn encode_signal<W: Write>(signal: &Signal, out: &mut W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&[VERSION, signal.ndim() as u8])?;
    for &d in signal.shape() {
        out.write_all(&(d as u64).to_le_bytes())?;
    }
    for v in signal.data() {
        out.write_all(&v.re.to_le_bytes())?;
        out.write_all(&v.im.to_le_bytes())?;
    }
    Ok(())
}

fn read_exact_or_eof<R: Read>(input: &mut R, buf: &mut [u8]) -> Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        let n = input.read(&mut buf[filled..])?;
        if n == 0 {
            if filled == 0 {
                return Ok(false);
            }
            return Err(PhaseError::Format("truncated signal record".into()));
        }
        filled += n;
    }
    Ok(true)
}

/// Decode the next record, or `None` at a clean end of input.
pub fn decode_signal<R: Read>(input: &mut R) -> Result<Option<Signal>> {
    let mut head = [0u8; 6];
    if !read_exact_or_eof(input, &mut head)? {
        return Ok(None);
    }
    if &head[..4] != MAGIC {
        return Err(PhaseError::Format("bad magic, expected PKSG".into()));
    }
    if head[4] != VERSION {
        return Err(PhaseError::Format(format!("unsupported version {}", head[4])));
    }
    let ndim = head[5] as usize;
    if ndim == 0 || ndim > 2 {
        return Err(PhaseError::Format(format!("unsupported ndim {ndim}")));
    }
    let mut dims = Vec::with_capacity(ndim);
    let mut word = [0u8; 8];
    for _ in 0..ndim {
        if !read_exact_or_eof(input, &mut word)? {
            return Err(PhaseError::Format("truncated header".into()));
        }
        dims.push(u64::from_le_bytes(word) as usize);
    }
    let len: usize = dims.iter().product();
    let mut data = Vec::with_capacity(len);
    for _ in 0..len {
        if !read_exact_or_eof(input, &mut word)? {
            return Err(PhaseError::Format("truncated payload".into()));
        }
        let re = f64::from_le_bytes(word);
        if !read_exact_or_eof(input, &mut word)? {
            return Err(PhaseError::Format("truncated payload".into()));
        }
        data.push(Complex64::new(re, f64::from_le_bytes(word)));
    }
    Signal::new(&dims, data).map(Some)
}

pub fn write_signals(path: impl AsRef<Path>, signals: &[Signal]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for s in signals {
        encode_signal(s, &mut out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_signal(path: impl AsRef<Path>, signal: &Signal) -> Result<()> {
    write_signals(path, std::slice::from_ref(signal))
}

pub fn read_signals(path: impl AsRef<Path>) -> Result<Vec<Signal>> {
    let mut input = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    while let Some(s) = decode_signal(&mut input)? {
        out.push(s);
    }
    Ok(out)
}

/// Read a file expected to hold exactly one record.
pub fn read_signal(path: impl AsRef<Path>) -> Result<Signal> {
    let mut all = read_signals(path)?;
    match all.len() {
        1 => Ok(all.pop().unwrap()),
        n => Err(PhaseError::Format(format!("expected one signal record, found {n}"))),
    }
}

pub fn write_signal_csv(path: impl AsRef<Path>, signal: &Signal) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = ["i", "j"][..signal.ndim()].to_vec();
    header.extend(["re", "im"]);
    w.write_record(&header)?;
    let mut rows = Vec::new();
    for_each_index(signal.shape(), |flat, idx| {
        let v = signal.data()[flat];
        let mut row: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
        row.push(format!("{:e}", v.re));
        row.push(format!("{:e}", v.im));
        rows.push(row);
    });
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Parse the CSV form; the shape is inferred from the largest indices.
/// The `im` column is optional (real signals).
pub fn read_signal_csv(path: impl AsRef<Path>) -> Result<Signal> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let col = |name: &str| header.iter().position(|h| h.trim() == name);
    let re_col = col("re").ok_or_else(|| PhaseError::Format("missing `re` column".into()))?;
    let im_col = col("im");
    let index_cols: Vec<usize> = ["i", "j"].iter().filter_map(|n| col(n)).collect();
    if index_cols.is_empty() {
        return Err(PhaseError::Format("missing index column `i`".into()));
    }
    let mut entries: Vec<(Vec<usize>, Complex64)> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let parse = |c: usize| -> Result<f64> {
            rec.get(c)
                .ok_or_else(|| PhaseError::Format("short row".into()))?
                .trim()
                .parse::<f64>()
                .map_err(|e| PhaseError::Format(format!("bad number: {e}")))
        };
        let idx = index_cols
            .iter()
            .map(|&c| parse(c).map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let im = match im_col {
            Some(c) => parse(c)?,
            None => 0.0,
        };
        entries.push((idx, Complex64::new(parse(re_col)?, im)));
    }
    if entries.is_empty() {
        return Err(PhaseError::Format("no data rows".into()));
    }
    let ndim = index_cols.len();
    let shape: Vec<usize> = (0..ndim)
        .map(|a| entries.iter().map(|(i, _)| i[a]).max().unwrap() + 1)
        .collect();
    let mut data = vec![Complex64::new(0.0, 0.0); shape.iter().product()];
    for (idx, v) in entries {
        data[crate::signal::ravel(&idx, &shape)] = v;
    }
    Signal::new(&shape, data)
}
