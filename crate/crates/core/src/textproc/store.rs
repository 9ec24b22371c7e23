//! On-disk forms of [`DocTermMatrix`].
//!
//! Text form: a `row_key,term,value` triplet CSV plus a JSON sidecar that
//! carries the state, config digest and the full row and term lists (rows
//! or terms with no stored value would otherwise vanish).
//!
//! Binary form, little-endian throughout:
//!
//! ```text
//! magic      8 bytes  "TNDTM\0v1"
//! state      u8       0 RawCounts, 1 Binary, 2 Tfidf, 3 TfidfL2
//! n_rows     u32
//! n_terms    u32
//! nnz        u64
//! digest     u16 length + UTF-8 bytes
//! rows       n_rows x (u16 length + UTF-8 sector, i32 year)
//! terms      n_terms x (u16 length + UTF-8 stem)
//! indptr     (n_rows + 1) x u64
//! indices    nnz x u32
//! values     nnz x f64
//! ```

use std::io::{Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::{DocTermMatrix, MatrixState, RowKey};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"TNDTM\0v1";

#[derive(Serialize, Deserialize)]
struct Sidecar {
    state: MatrixState,
    config_digest: String,
    rows: Vec<RowKey>,
    terms: Vec<String>,
    zero_rows: Vec<usize>,
}

/// Write the triplet CSV to `csv_out` and the sidecar JSON to `sidecar_out`.
pub fn write_triplets<W1: Write, W2: Write>(
    m: &DocTermMatrix,
    mut csv_out: W1,
    sidecar_out: W2,
) -> Result<()> {
    writeln!(csv_out, "row_key,term,value")?;
    for i in 0..m.n_rows() {
        let (idx, vals) = m.row(i);
        for (&c, &v) in idx.iter().zip(vals) {
            writeln!(csv_out, "{},{},{}", m.rows[i], m.terms[c as usize], v)?;
        }
    }
    let side = Sidecar {
        state: m.state,
        config_digest: m.config_digest.clone(),
        rows: m.rows.clone(),
        terms: m.terms.clone(),
        zero_rows: m.zero_rows.clone(),
    };
    serde_json::to_writer_pretty(sidecar_out, &side).map_err(|e| Error::input(e.to_string()))?;
    Ok(())
}

pub fn read_triplets<R1: Read, R2: Read>(csv_in: R1, sidecar_in: R2) -> Result<DocTermMatrix> {
    let side: Sidecar =
        serde_json::from_reader(sidecar_in).map_err(|e| Error::input(format!("sidecar: {e}")))?;
    let row_pos: std::collections::HashMap<String, usize> = side
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| (r.to_string(), i))
        .collect();
    let mut entries: Vec<Vec<(u32, f64)>> = vec![Vec::new(); side.rows.len()];
    let mut rdr = csv::Reader::from_reader(csv_in);
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::input(e.to_string()))?;
        let (key, term, value) = (&rec[0], &rec[1], &rec[2]);
        let i = *row_pos
            .get(key)
            .ok_or_else(|| Error::input(format!("unknown row key {key}")))?;
        let c = side
            .terms
            .binary_search_by(|t| t.as_str().cmp(term))
            .map_err(|_| Error::input(format!("unknown term {term}")))?;
        let v: f64 = value
            .parse()
            .map_err(|_| Error::input(format!("bad value {value}")))?;
        entries[i].push((c as u32, v));
    }
    let mut m = DocTermMatrix {
        rows: side.rows,
        terms: side.terms,
        indptr: vec![0],
        indices: Vec::new(),
        values: Vec::new(),
        state: side.state,
        zero_rows: side.zero_rows,
        config_digest: side.config_digest,
    };
    for mut row in entries {
        row.sort_by_key(|e| e.0);
        for (c, v) in row {
            m.indices.push(c);
            m.values.push(v);
        }
        m.indptr.push(m.indices.len());
    }
    Ok(m)
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    let len = u16::try_from(s.len()).map_err(|_| Error::input("string longer than 65535 bytes"))?;
    w.write_u16::<LE>(len)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = r.read_u16::<LE>()? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::input("invalid UTF-8 in binary matrix"))
}

pub fn write_binary<W: Write>(m: &DocTermMatrix, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u8(m.state.code())?;
    w.write_u32::<LE>(m.n_rows() as u32)?;
    w.write_u32::<LE>(m.n_terms() as u32)?;
    w.write_u64::<LE>(m.nnz() as u64)?;
    write_str(&mut w, &m.config_digest)?;
    for r in &m.rows {
        write_str(&mut w, &r.sector)?;
        w.write_i32::<LE>(r.year)?;
    }
    for t in &m.terms {
        write_str(&mut w, t)?;
    }
    for &p in &m.indptr {
        w.write_u64::<LE>(p as u64)?;
    }
    for &c in &m.indices {
        w.write_u32::<LE>(c)?;
    }
    for &v in &m.values {
        w.write_f64::<LE>(v)?;
    }
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<DocTermMatrix> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::input("not a document-term matrix file"));
    }
    let state =
        MatrixState::from_code(r.read_u8()?).ok_or_else(|| Error::input("bad matrix state"))?;
    let n_rows = r.read_u32::<LE>()? as usize;
    let n_terms = r.read_u32::<LE>()? as usize;
    let nnz = r.read_u64::<LE>()? as usize;
    let config_digest = read_str(&mut r)?;
    let mut rows = Vec::with_capacity(n_rows);
    for _ in 0..n_rows {
        let sector = read_str(&mut r)?;
        rows.push(RowKey {
            sector,
            year: r.read_i32::<LE>()?,
        });
    }
    let terms = (0..n_terms)
        .map(|_| read_str(&mut r))
        .collect::<Result<Vec<_>>>()?;
    let indptr = (0..=n_rows)
        .map(|_| Ok(r.read_u64::<LE>()? as usize))
        .collect::<Result<Vec<_>>>()?;
    let mut indices = vec![0u32; nnz];
    r.read_u32_into::<LE>(&mut indices)?;
    let mut values = vec![0f64; nnz];
    r.read_f64_into::<LE>(&mut values)?;
    let zero_rows = (0..n_rows)
        .filter(|&i| indptr[i] == indptr[i + 1])
        .collect();
    Ok(DocTermMatrix {
        rows,
        terms,
        indptr,
        indices,
        values,
        state,
        zero_rows,
        config_digest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textproc::{vectorize, PipelineConfig};
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn arb_docs() -> impl Strategy<Value = BTreeMap<RowKey, Vec<String>>> {
        prop::collection::vec(prop::collection::vec("[a-f]{2,4}", 0..12), 3..8).prop_map(|rows| {
            rows.into_iter()
                .enumerate()
                .map(|(i, stems)| {
                    (
                        RowKey::new(format!("S{}", i % 3), 2000 + (i / 3) as i32),
                        stems,
                    )
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn triplets_and_binary_round_trip(docs in arb_docs()) {
            let cfg = PipelineConfig::default();
            let Ok(m) = vectorize(&docs, &cfg) else { return Ok(()) };
            let (mut csv, mut side) = (Vec::new(), Vec::new());
            write_triplets(&m, &mut csv, &mut side).unwrap();
            prop_assert_eq!(&read_triplets(csv.as_slice(), side.as_slice()).unwrap(), &m);
            let mut bin = Vec::new();
            write_binary(&m, &mut bin).unwrap();
            prop_assert_eq!(&read_binary(bin.as_slice()).unwrap(), &m);
        }
    }

    #[test]
    fn rejects_foreign_binary() {
        assert!(read_binary(&b"NOTAMATRIX......"[..]).is_err());
    }
}
