//! Line-oriented query replay.
//!
//! One JSON object per line:
//! `{"query_id": 7, "relevance": [0.1, 0.0, ...], "rows": [[3, 19], ...]}`.
//! `rows` is optional and holds one row id per embedding table for each item.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::query::QueryInstance;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    query_id: u64,
    relevance: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rows: Option<Vec<Vec<u64>>>,
}

pub fn read_queries<T: Scalar, R: BufRead>(r: R) -> Result<Vec<QueryInstance<T>>> {
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let de = &mut serde_json::Deserializer::from_str(&line);
        let rec: Record = serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
            field: format!("line {}: {}", lineno + 1, e.path()),
            message: e.into_inner().to_string(),
        })?;
        let q = QueryInstance {
            query_id: rec.query_id,
            relevance: rec.relevance.into_iter().map(T::lit).collect(),
            rows: rec.rows,
        };
        q.validate(None)?;
        out.push(q);
    }
    Ok(out)
}

pub fn write_queries<T: Scalar, W: Write>(queries: &[QueryInstance<T>], mut w: W) -> Result<()> {
    for q in queries {
        let rec = Record {
            query_id: q.query_id,
            relevance: q.relevance.iter().map(|r| r.to_f64_lossy()).collect(),
            rows: q.rows.clone(),
        };
        serde_json::to_writer(&mut w, &rec).map_err(|e| Error::Io(e.into()))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
