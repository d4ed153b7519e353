//! Zipfian embedding-access traces and their binary file format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic          4 bytes  "RPTR"
//! version        u32      1
//! n_tables       u32
//! rows_per_table u64
//! n_records      u64
//! records        n_records x (table_id u32, row_id u64)
//! ```
//!
//! Row 0 is the most popular row of every table.

use std::io::{Read, Write};

use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const MAGIC: &[u8; 4] = b"RPTR";
pub const VERSION: u32 = 1;
const HEADER_BYTES: usize = 4 + 4 + 4 + 8 + 8;
const RECORD_BYTES: usize = 12;

fn default_exponent() -> f64 {
    1.0
}

fn default_tables() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSpec {
    pub n_rows: u64,
    #[serde(default = "default_exponent")]
    pub zipf_exponent: f64,
    pub n_accesses: u64,
    #[serde(default = "default_tables")]
    pub n_tables: u32,
    #[serde(default)]
    pub seed: u64,
}

impl TraceSpec {
    pub fn new(n_rows: u64, zipf_exponent: f64, n_accesses: u64, seed: u64) -> Self {
        TraceSpec {
            n_rows,
            zipf_exponent,
            n_accesses,
            n_tables: 1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.zipf_exponent > 0.0 && self.zipf_exponent.is_finite()) {
            return Err(Error::validation("zipf_exponent", "must be finite and > 0"));
        }
        if self.n_rows == 0 {
            return Err(Error::validation("n_rows", "must be >= 1"));
        }
        if self.n_tables == 0 {
            return Err(Error::validation("n_tables", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Access {
    pub table: u32,
    pub row: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub n_tables: u32,
    pub rows_per_table: u64,
    pub records: Vec<Access>,
}

/// Zipf sampler over `[0, n)` with row 0 the most popular.
#[derive(Debug, Clone, Copy)]
pub struct ZipfRows {
    dist: Zipf<f64>,
    n: u64,
}

impl ZipfRows {
    pub fn new(n: u64, exponent: f64) -> Result<Self> {
        let dist = Zipf::new(n as f64, exponent)
            .map_err(|e| Error::validation("zipf", e.to_string()))?;
        Ok(ZipfRows { dist, n })
    }

    #[inline]
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let k = self.dist.sample(rng) as u64;
        k.clamp(1, self.n) - 1
    }
}

/// Generates the access sequence. Record `i` targets table `i mod n_tables`.
pub fn generate(spec: &TraceSpec) -> Result<Trace> {
    spec.validate()?;
    let zipf = ZipfRows::new(spec.n_rows, spec.zipf_exponent)?;
    let mut rng = rng::stream(spec.seed, &[rng::TAG_TRACE]);
    let records = (0..spec.n_accesses)
        .map(|i| Access {
            table: (i % spec.n_tables as u64) as u32,
            row: zipf.sample(&mut rng),
        })
        .collect();
    Ok(Trace {
        n_tables: spec.n_tables,
        rows_per_table: spec.n_rows,
        records,
    })
}

pub fn write_trace<W: Write>(trace: &Trace, mut w: W) -> Result<()> {
    let mut buf = Vec::with_capacity(HEADER_BYTES + trace.records.len() * RECORD_BYTES);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&trace.n_tables.to_le_bytes());
    buf.extend_from_slice(&trace.rows_per_table.to_le_bytes());
    buf.extend_from_slice(&(trace.records.len() as u64).to_le_bytes());
    for a in &trace.records {
        buf.extend_from_slice(&a.table.to_le_bytes());
        buf.extend_from_slice(&a.row.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn read_trace<R: Read>(mut r: R) -> Result<Trace> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < HEADER_BYTES {
        return Err(Error::Trace("truncated header".into()));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Trace("bad magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(Error::Trace(format!("unsupported version {version}")));
    }
    let n_tables = u32_at(8);
    let rows_per_table = u64_at(12);
    let n = u64_at(20) as usize;
    if bytes.len() != HEADER_BYTES + n * RECORD_BYTES {
        return Err(Error::Trace(format!(
            "expected {n} records, found {} payload bytes",
            bytes.len() - HEADER_BYTES
        )));
    }
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let o = HEADER_BYTES + i * RECORD_BYTES;
        let a = Access {
            table: u32_at(o),
            row: u64_at(o + 4),
        };
        if a.table >= n_tables || a.row >= rows_per_table {
            return Err(Error::Trace(format!("record {i} out of range")));
        }
        records.push(a);
    }
    Ok(Trace {
        n_tables,
        rows_per_table,
        records,
    })
}

/// Generalized harmonic number `sum_{k=1..n} k^-s`.
///
/// Exact up to 10^4 terms, Euler-Maclaurin tail beyond.
pub fn harmonic(n: u64, s: f64) -> f64 {
    const EXACT: u64 = 10_000;
    let m = n.min(EXACT);
    // summing small terms first keeps the error down
    let head: f64 = (1..=m).rev().map(|k| (k as f64).powf(-s)).sum();
    if n <= EXACT {
        return head;
    }
    let (a, b) = (m as f64, n as f64);
    let integral = if (s - 1.0).abs() < 1e-12 {
        (b / a).ln()
    } else {
        (b.powf(1.0 - s) - a.powf(1.0 - s)) / (1.0 - s)
    };
    let tail = integral + 0.5 * (b.powf(-s) - a.powf(-s))
        + s / 12.0 * (a.powf(-s - 1.0) - b.powf(-s - 1.0));
    head + tail
}

/// Share of Zipf(`s`) accesses landing on the `c` most popular of `n` rows.
pub fn zipf_top_share(c: u64, n: u64, s: f64) -> f64 {
    if c == 0 {
        return 0.0;
    }
    if c >= n {
        return 1.0;
    }
    harmonic(c, s) / harmonic(n, s)
}
