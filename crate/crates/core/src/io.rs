//! Binary and CSV formats.
//!
//! Environments: `RPLENV1`, then a length-prefixed JSON law tag, window
//! bounds, seed, count and the little-endian `f64` payload. Paths: `RPLPATH1`,
//! kind code, duration, length, then `(t, value)` pairs. Range-law tables
//! are cached as `RPLTAB1` files named after `(n, window)`.
//!
//! CSV output has a header row and LF endings; floats are written in the
//! shortest form that round-trips, so equal inputs give equal bytes.

use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use crate::env::{Environment, Law, Window};
use crate::polymer::{EndpointMarginal, ExpansionRow};
use crate::rangelaw::{Mode, RangeLawTable};
use crate::stochproc::{ProcessKind, ProcessPath};

pub const ENV_MAGIC: &[u8; 7] = b"RPLENV1";
pub const PATH_MAGIC: &[u8; 8] = b"RPLPATH1";
pub const TABLE_MAGIC: &[u8; 7] = b"RPLTAB1";

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("bad magic: expected {0}")]
    Magic(&'static str),
    #[error("bad header: {0}")]
    Header(String),
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> io::Result<[u8; N]> {
        let mut b = [0u8; N];
        self.inner.read_exact(&mut b)?;
        Ok(b)
    }
    fn u8(&mut self) -> io::Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }
    fn u32(&mut self) -> io::Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> io::Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn i64(&mut self) -> io::Result<i64> {
        Ok(i64::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> io::Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn f64s(&mut self, n: usize) -> io::Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
    fn json<T: serde::de::DeserializeOwned>(&mut self) -> Result<T, IoError> {
        let len = self.u32()? as usize;
        let mut buf = vec![0u8; len];
        self.inner.read_exact(&mut buf)?;
        serde_json::from_slice(&buf).map_err(|e| IoError::Header(e.to_string()))
    }
}

fn put_json<W: Write, T: serde::Serialize>(w: &mut W, v: &T) -> io::Result<()> {
    let s = serde_json::to_vec(v).map_err(io::Error::other)?;
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(&s)
}

fn put_f64s<W: Write>(w: &mut W, xs: &[f64]) -> io::Result<()> {
    for x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// environments

pub fn write_env<W: Write>(mut w: W, e: &Environment) -> Result<(), IoError> {
    w.write_all(ENV_MAGIC)?;
    put_json(&mut w, &e.law)?;
    w.write_all(&e.window.lo.to_le_bytes())?;
    w.write_all(&e.window.hi.to_le_bytes())?;
    w.write_all(&e.seed.to_le_bytes())?;
    w.write_all(&(e.values.len() as u64).to_le_bytes())?;
    put_f64s(&mut w, &e.values)?;
    Ok(())
}

pub fn read_env<R: Read>(r: R) -> Result<Environment, IoError> {
    let mut r = Reader { inner: r };
    if &r.bytes::<7>()? != ENV_MAGIC {
        return Err(IoError::Magic("RPLENV1"));
    }
    let law: Law = r.json()?;
    let (lo, hi) = (r.i64()?, r.i64()?);
    let seed = r.u64()?;
    let count = r.u64()?;
    if hi < lo || (hi - lo + 1) as u64 != count {
        return Err(IoError::Header(format!("window [{lo}, {hi}] with {count} values")));
    }
    let values = r.f64s(count as usize)?;
    Ok(Environment::from_values(Window::new(lo, hi), values, law, seed))
}

pub fn env_csv<W: Write>(w: W, e: &Environment) -> Result<(), IoError> {
    let mut c = csv_writer(w);
    c.write_record(["z", "omega"])?;
    for (i, v) in e.values.iter().enumerate() {
        c.serialize((e.window.lo + i as i64, v))?;
    }
    c.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// paths

pub fn write_path<W: Write>(mut w: W, p: &ProcessPath) -> Result<(), IoError> {
    w.write_all(PATH_MAGIC)?;
    w.write_all(&[p.kind.code()])?;
    w.write_all(&p.duration.to_le_bytes())?;
    w.write_all(&(p.times.len() as u64).to_le_bytes())?;
    for (t, v) in p.times.iter().zip(&p.values) {
        w.write_all(&t.to_le_bytes())?;
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_path<R: Read>(r: R) -> Result<ProcessPath, IoError> {
    let mut r = Reader { inner: r };
    if &r.bytes::<8>()? != PATH_MAGIC {
        return Err(IoError::Magic("RPLPATH1"));
    }
    let code = r.u8()?;
    let duration = r.f64()?;
    let kind = ProcessKind::from_code(code, duration).ok_or_else(|| IoError::Header(format!("kind code {code}")))?;
    let len = r.u64()? as usize;
    let mut times = Vec::with_capacity(len);
    let mut values = Vec::with_capacity(len);
    for _ in 0..len {
        times.push(r.f64()?);
        values.push(r.f64()?);
    }
    Ok(ProcessPath { times, values, kind, duration })
}

pub fn path_csv<W: Write>(w: W, p: &ProcessPath) -> Result<(), IoError> {
    let mut c = csv_writer(w);
    c.write_record(["t", "value"])?;
    for (t, v) in p.times.iter().zip(&p.values) {
        c.serialize((t, v))?;
    }
    c.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// range-law tables

/// Cache file name for a table; `tilt` is part of the key because tilted
/// tables truncate differently.
pub fn table_cache_name(n: u64, t_min: u64, t_max: u64, tilt: Option<f64>) -> String {
    match tilt {
        Some(h) => format!("range-n{n}-T{t_min}-{t_max}-h{:016x}.rpltab", h.to_bits()),
        None => format!("range-n{n}-T{t_min}-{t_max}.rpltab"),
    }
}

pub fn write_table<W: Write>(mut w: W, t: &RangeLawTable) -> Result<(), IoError> {
    w.write_all(TABLE_MAGIC)?;
    put_json(&mut w, &(t.mode, t.tilt))?;
    for v in [t.n, t.t_min, t.t_max, t.dp_fallbacks] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&t.truncation_error.to_le_bytes())?;
    for row in &t.rows {
        put_f64s(&mut w, row)?;
    }
    Ok(())
}

pub fn read_table<R: Read>(r: R) -> Result<RangeLawTable, IoError> {
    let mut r = Reader { inner: r };
    if &r.bytes::<7>()? != TABLE_MAGIC {
        return Err(IoError::Magic("RPLTAB1"));
    }
    let (mode, tilt): (Mode, Option<f64>) = r.json()?;
    let (n, t_min, t_max, dp_fallbacks) = (r.u64()?, r.u64()?, r.u64()?, r.u64()?);
    if t_max < t_min {
        return Err(IoError::Header(format!("T range {t_min}..{t_max}")));
    }
    let truncation_error = r.f64()?;
    let rows = (t_min..=t_max).map(|t| r.f64s(t as usize + 1)).collect::<io::Result<_>>()?;
    Ok(RangeLawTable { n, t_min, t_max, rows, truncation_error, tilt, mode, dp_fallbacks })
}

/// Loads the table from `dir` if cached, otherwise builds and stores it.
pub fn cached_table<F>(dir: &Path, n: u64, t_min: u64, t_max: u64, tilt: Option<f64>, build: F) -> Result<RangeLawTable, IoError>
where
    F: FnOnce() -> RangeLawTable,
{
    let path: PathBuf = dir.join(table_cache_name(n, t_min, t_max, tilt));
    if let Ok(f) = std::fs::File::open(&path) {
        if let Ok(t) = read_table(io::BufReader::new(f)) {
            return Ok(t);
        }
    }
    let t = build();
    std::fs::create_dir_all(dir)?;
    let tmp = path.with_extension("tmp");
    let mut out = io::BufWriter::new(std::fs::File::create(&tmp)?);
    write_table(&mut out, &t)?;
    out.flush()?;
    drop(out);
    std::fs::rename(tmp, path)?;
    Ok(t)
}

pub fn table_csv<W: Write>(w: W, t: &RangeLawTable) -> Result<(), IoError> {
    let mut c = csv_writer(w);
    c.write_record(["x", "y", "logp"])?;
    for (x, y, lp) in t.iter() {
        c.serialize((x, y, lp))?;
    }
    c.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// polymer outputs

pub fn marginal_csv<W: Write>(w: W, m: &EndpointMarginal) -> Result<(), IoError> {
    let mut c = csv_writer(w);
    c.write_record(["x", "y", "prob"])?;
    for (i, row) in m.probs.iter().enumerate() {
        let t = m.t_min + i as u64;
        for (x, p) in row.iter().enumerate() {
            c.serialize((x, t - x as u64, p))?;
        }
    }
    c.flush()?;
    Ok(())
}

pub fn expansion_csv<W: Write>(w: W, rows: &[ExpansionRow]) -> Result<(), IoError> {
    let mut c = csv_writer(w);
    c.write_record(["n", "replica", "logZ", "residual2", "residual3", "ref_sup", "ref_w2"])?;
    for r in rows {
        let w2 = r.ref_w2.map(|v| v.to_string()).unwrap_or_default();
        c.serialize((r.n, r.replica, r.log_z, r.residual2, r.residual3, r.ref_sup, w2))?;
    }
    c.flush()?;
    Ok(())
}

/// Generic numeric table: header then rows. Used for ad hoc experiment
/// outputs in the command-line tool.
pub fn rows_csv<W: Write>(w: W, header: &[&str], rows: &[Vec<f64>]) -> Result<(), IoError> {
    let mut c = csv_writer(w);
    c.write_record(header)?;
    for r in rows {
        c.serialize(r)?;
    }
    c.flush()?;
    Ok(())
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

/// Reads a numeric CSV into `(header, columns)`. Empty input gives an empty
/// header. Cells that do not parse as `f64` become NaN.
pub fn read_numeric_csv<R: Read>(r: R) -> Result<(Vec<String>, Vec<Vec<f64>>), IoError> {
    let mut c = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(r);
    let mut records = c.records();
    let header: Vec<String> = match records.next() {
        Some(h) => h?.iter().map(|s| s.trim().to_string()).collect(),
        None => return Ok((Vec::new(), Vec::new())),
    };
    let mut cols = vec![Vec::new(); header.len()];
    for rec in records {
        let rec = rec?;
        for (j, col) in cols.iter_mut().enumerate() {
            col.push(rec.get(j).and_then(|s| s.trim().parse().ok()).unwrap_or(f64::NAN));
        }
    }
    Ok((header, cols))
}
