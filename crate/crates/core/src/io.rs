//! File formats: edge lists, packed upper-triangle bitsets, coordinate and
//! distance CSVs, per-replicate statistics and JSON reports.
//!
//! Floats are written in Rust's shortest round-trip form so files are
//! reproducible byte for byte.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::manifold::GeodesicMatrix;
use crate::montecarlo::{ConvergenceRow, ReplicateStatistics};
use crate::rdpg::Adjacency;

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(r)
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

fn parse_f64(field: &str, line: u64) -> Result<f64> {
    field
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: `{field}` is not a number")))
}

fn parse_usize(field: &str, line: u64) -> Result<usize> {
    field
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: `{field}` is not a vertex index")))
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

/// One `i,j` line per edge with `i < j`, no header.
pub fn write_edge_list<W: Write>(a: &Adjacency, w: W) -> Result<()> {
    let mut out = writer(w);
    for (i, j) in a.edges() {
        out.write_record([i.to_string(), j.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads `i,j` lines. A leading `i,j` header is skipped. Without `n` the
/// vertex count is one more than the largest index.
pub fn read_edge_list<R: Read>(r: R, n: Option<usize>) -> Result<Adjacency> {
    let mut edges = Vec::new();
    for (k, record) in reader(r).records().enumerate() {
        let record = record?;
        if k == 0 && record.iter().eq(["i", "j"]) {
            continue;
        }
        let line = line_of(&record);
        if record.len() != 2 {
            return Err(Error::Parse(format!("line {line}: expected `i,j`")));
        }
        edges.push((parse_usize(&record[0], line)?, parse_usize(&record[1], line)?));
    }
    let n = n.unwrap_or_else(|| edges.iter().map(|&(i, j)| i.max(j) + 1).max().unwrap_or(0));
    Adjacency::from_edges(n, edges)
}

/// Vertex count as 8 little-endian bytes, then the strict upper triangle in
/// row-major order packed least-significant bit first.
pub fn adjacency_to_bitset(a: &Adjacency) -> Vec<u8> {
    let n = a.n();
    let bits = n * n.saturating_sub(1) / 2;
    let mut out = (n as u64).to_le_bytes().to_vec();
    out.resize(8 + bits.div_ceil(8), 0);
    let row_start = |i: usize| i * (2 * n - i - 1) / 2;
    for (i, j) in a.edges() {
        let bit = row_start(i) + (j - i - 1);
        out[8 + bit / 8] |= 1 << (bit % 8);
    }
    out
}

pub fn adjacency_from_bitset(bytes: &[u8]) -> Result<Adjacency> {
    let header: [u8; 8] = bytes
        .get(..8)
        .and_then(|h| h.try_into().ok())
        .ok_or_else(|| Error::Parse("bitset shorter than its header".into()))?;
    let n = usize::try_from(u64::from_le_bytes(header))
        .map_err(|_| Error::Parse("bitset vertex count does not fit".into()))?;
    let bits = n
        .checked_mul(n.saturating_sub(1))
        .map(|v| v / 2)
        .ok_or_else(|| Error::Parse("bitset vertex count too large".into()))?;
    let body = &bytes[8..];
    if body.len() != bits.div_ceil(8) {
        return Err(Error::Parse(format!(
            "bitset for {n} vertices needs {} bytes, found {}",
            bits.div_ceil(8),
            body.len()
        )));
    }
    let mut edges = Vec::new();
    let mut bit = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            if body[bit / 8] >> (bit % 8) & 1 == 1 {
                edges.push((i, j));
            }
            bit += 1;
        }
    }
    Adjacency::from_edges(n, edges)
}

/// Rows of `m` under the header `v,x1..xr`.
pub fn write_coordinates<W: Write>(m: &DMatrix<f64>, w: W) -> Result<()> {
    let mut out = writer(w);
    let mut header = vec!["v".to_string()];
    header.extend((1..=m.ncols()).map(|c| format!("x{c}")));
    out.write_record(&header)?;
    for (i, row) in m.row_iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(row.iter().map(|&v| fmt(v)));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a `v,x1..xr` file; `v` must run 0, 1, 2, ... in order.
pub fn read_coordinates<R: Read>(r: R) -> Result<DMatrix<f64>> {
    let mut records = reader(r).into_records();
    let header = records
        .next()
        .ok_or_else(|| Error::Parse("empty coordinate file".into()))??;
    if header.get(0) != Some("v") || header.len() < 2 {
        return Err(Error::Parse("coordinate file must start with header `v,x1,...`".into()));
    }
    let k = header.len() - 1;
    let mut values = Vec::new();
    let mut n = 0;
    for record in records {
        let record = record?;
        let line = line_of(&record);
        if record.len() != k + 1 {
            return Err(Error::Parse(format!("line {line}: expected {} fields", k + 1)));
        }
        if parse_usize(&record[0], line)? != n {
            return Err(Error::Parse(format!("line {line}: vertex ids must be 0, 1, 2, ...")));
        }
        for field in record.iter().skip(1) {
            values.push(parse_f64(field, line)?);
        }
        n += 1;
    }
    Ok(DMatrix::from_row_slice(n, k, &values))
}

/// `v,z` rows; vertices without a coordinate get an empty field.
pub fn write_line_embedding<W: Write>(z: &[f64], w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["v", "z"])?;
    for (i, &v) in z.iter().enumerate() {
        out.write_record([i.to_string(), fmt(v)])?;
    }
    out.flush()?;
    Ok(())
}

/// Dense `n x n` matrix, one row per line, no header.
pub fn write_distances<W: Write>(d: &GeodesicMatrix, w: W) -> Result<()> {
    let mut out = writer(w);
    for row in d.matrix().row_iter() {
        out.write_record(row.iter().map(|&v| fmt(v)))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_distances<R: Read>(r: R) -> Result<GeodesicMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader(r).records() {
        let record = record?;
        let line = line_of(&record);
        rows.push(record.iter().map(|f| parse_f64(f, line)).collect::<Result<_>>()?);
    }
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::Parse("distance matrix must be square".into()));
    }
    GeodesicMatrix::from_matrix(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// `arm,index,Tk,T1,T1hat,failed`; a missing statistic is an empty field.
pub fn write_replicates<W: Write>(rows: &[ReplicateStatistics], w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["arm", "index", "Tk", "T1", "T1hat", "failed"])?;
    for r in rows {
        out.write_record([
            r.arm.name().to_string(),
            r.index.to_string(),
            fmt_opt(r.t_k),
            fmt_opt(r.t_1),
            fmt_opt(r.t_1_hat),
            u8::from(r.failed()).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_convergence<W: Write>(rows: &[ConvergenceRow], w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["m", "power_T1", "power_T1hat", "gap", "standard_error"])?;
    for r in rows {
        out.write_record([
            r.m.to_string(),
            fmt(r.power_t_1),
            fmt(r.power_t_1_hat),
            fmt(r.gap),
            fmt(r.standard_error),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Pretty JSON with a trailing newline. Non-finite floats become `null`.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Adjacency {
        Adjacency::from_edges(5, [(0, 1), (1, 4), (2, 3), (0, 4)]).unwrap()
    }

    #[test]
    fn edge_list_format() {
        let mut buf = Vec::new();
        write_edge_list(&sample(), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "0,1\n0,4\n1,4\n2,3\n");
        let back = read_edge_list(&buf[..], Some(5)).unwrap();
        assert_eq!(back, sample());
        let with_header = read_edge_list(&b"i,j\n0,1\n"[..], None).unwrap();
        assert_eq!(with_header.n(), 2);
        assert!(read_edge_list(&b"0,x\n"[..], None).is_err());
        assert!(read_edge_list(&b"1,1\n"[..], None).is_err());
    }

    #[test]
    fn bitset_layout() {
        let bytes = adjacency_to_bitset(&sample());
        // pairs (0,1) (0,2) (0,3) (0,4) (1,2) (1,3) (1,4) (2,3) (2,4) (3,4)
        assert_eq!(&bytes[..8], &5u64.to_le_bytes());
        assert_eq!(&bytes[8..], &[0b1100_1001, 0]);
        assert_eq!(adjacency_from_bitset(&bytes).unwrap(), sample());
        assert!(adjacency_from_bitset(&bytes[..9]).is_err());
        assert_eq!(adjacency_from_bitset(&0u64.to_le_bytes()).unwrap().n(), 0);
    }

    #[test]
    fn coordinate_format() {
        let m = DMatrix::from_row_slice(2, 2, &[0.5, -1.0, 2.0, 0.1]);
        let mut buf = Vec::new();
        write_coordinates(&m, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "v,x1,x2\n0,0.5,-1\n1,2,0.1\n");
        assert_eq!(read_coordinates(&buf[..]).unwrap(), m);
        assert!(read_coordinates(&b"v,x1\n1,0.5\n"[..]).is_err());
    }

    #[test]
    fn distance_format() {
        let d = GeodesicMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[0.0, 1.5, 1.5, 0.0])).unwrap();
        let mut buf = Vec::new();
        write_distances(&d, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "0,1.5\n1.5,0\n");
        assert_eq!(read_distances(&buf[..]).unwrap(), d);
    }

    #[test]
    fn replicate_rows() {
        use crate::montecarlo::Arm;
        let rows = [ReplicateStatistics {
            arm: Arm::Alternative,
            index: 3,
            t_k: Some(0.25),
            t_1: Some(0.125),
            t_1_hat: None,
            failure: Some("disconnected".into()),
        }];
        let mut buf = Vec::new();
        write_replicates(&rows, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "arm,index,Tk,T1,T1hat,failed\nalternative,3,0.25,0.125,,1\n"
        );
    }
}
