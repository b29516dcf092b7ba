//! File formats. Floats are written with Rust's shortest round-trip
//! formatting so every value parses back bit-identically.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extension::BoundaryData;
use crate::lattice::{validate, EdgeKind, LatticePoint, Mesh};
use crate::operator::{check_dim, CsrMatrix};

pub const MATRIX_MARKET_HEADER: &str = "%%MatrixMarket matrix coordinate real symmetric";
pub const SNWV_MAGIC: &[u8; 4] = b"SNWV";
pub const SNWV_VERSION: u32 = 1;

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("<stream>", e)
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// Writes a CSV with `header` followed by one line per row.
pub fn write_csv<W: Write>(mut w: W, header: &str, rows: impl IntoIterator<Item = String>) -> Result<()> {
    writeln!(w, "{header}").map_err(io_err)?;
    for row in rows {
        writeln!(w, "{row}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Reads a CSV with the exact `header`, returning the fields of each
/// non-empty line.
pub fn read_csv<R: BufRead>(r: R, format: &'static str, header: &str) -> Result<Vec<Vec<String>>> {
    let mut lines = r.lines();
    match lines.next() {
        Some(Ok(h)) if h.trim_end() == header => {}
        Some(Ok(h)) => return Err(Error::format(format, format!("expected header {header:?}, found {h:?}"))),
        Some(Err(e)) => return Err(io_err(e)),
        None => return Err(Error::format(format, "empty input")),
    }
    let columns = header.split(',').count();
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
        if fields.len() != columns {
            return Err(Error::format(format, format!("line {}: expected {columns} fields", k + 2)));
        }
        rows.push(fields);
    }
    Ok(rows)
}

fn parse<T: std::str::FromStr>(format: &'static str, field: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::format(format, format!("cannot parse {field:?}")))
}

#[derive(Serialize, Deserialize)]
struct MeshFile {
    level: u32,
    vertices: Vec<[i64; 2]>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<(usize, usize, String)>,
    boundary_vertices: Vec<usize>,
}

pub fn write_mesh_json<W: Write>(mut w: W, mesh: &Mesh) -> Result<()> {
    let file = MeshFile {
        level: mesh.level(),
        vertices: mesh.vertices().iter().map(|p| [p.a, p.b]).collect(),
        triangles: mesh.triangles().to_vec(),
        edges: mesh
            .edges()
            .iter()
            .map(|e| {
                let tag = match e.kind {
                    EdgeKind::Boundary => "b",
                    EdgeKind::Interior => "i",
                };
                (e.lo, e.hi, tag.to_string())
            })
            .collect(),
        boundary_vertices: mesh.boundary_vertices().to_vec(),
    };
    serde_json::to_writer(&mut w, &file)?;
    writeln!(w).map_err(io_err)?;
    w.flush().map_err(io_err)
}

/// Reads a mesh and rejects it unless every invariant holds and the stored
/// edges and boundary cycle agree with those derived from the triangles.
pub fn read_mesh_json<R: Read>(r: R) -> Result<Mesh> {
    let file: MeshFile = serde_json::from_reader(r)?;
    let vertices = file.vertices.iter().map(|&[a, b]| LatticePoint::new(a, b)).collect();
    let mesh = Mesh::from_triangles(file.level, vertices, file.triangles)?;
    let report = validate(&mesh);
    if let Some(failed) = report.failures().next() {
        return Err(Error::InvalidMesh(format!("invariant {} fails", failed.name)));
    }
    let derived: Vec<(usize, usize, String)> = mesh
        .edges()
        .iter()
        .map(|e| (e.lo, e.hi, if e.is_boundary() { "b" } else { "i" }.to_string()))
        .collect();
    if derived != file.edges {
        return Err(Error::InvalidMesh("edge list disagrees with the triangles".into()));
    }
    if mesh.boundary_vertices() != file.boundary_vertices.as_slice() {
        return Err(Error::InvalidMesh("boundary vertex list disagrees with the triangles".into()));
    }
    Ok(mesh)
}

/// Lower triangle of a symmetric matrix, 1-based.
pub fn write_matrix_market<W: Write>(mut w: W, m: &CsrMatrix) -> Result<()> {
    if !m.is_symmetric() {
        return Err(Error::Argument("MatrixMarket export needs a symmetric matrix".into()));
    }
    let lower: Vec<_> = m.triplets().filter(|&(i, j, _)| i >= j).collect();
    writeln!(w, "{MATRIX_MARKET_HEADER}").map_err(io_err)?;
    writeln!(w, "{} {} {}", m.dim(), m.dim(), lower.len()).map_err(io_err)?;
    for (i, j, v) in lower {
        writeln!(w, "{} {} {}", i + 1, j + 1, fmt_f64(v)).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_matrix_market<R: BufRead>(r: R) -> Result<CsrMatrix> {
    const F: &str = "MatrixMarket";
    let mut lines = r.lines();
    let header = lines.next().transpose().map_err(io_err)?.unwrap_or_default();
    if header.trim_end() != MATRIX_MARKET_HEADER {
        return Err(Error::format(F, format!("unsupported header {header:?}")));
    }
    let mut body = lines.filter(|l| !matches!(l, Ok(s) if s.starts_with('%') || s.trim().is_empty()));
    let size = body
        .next()
        .transpose()
        .map_err(io_err)?
        .ok_or_else(|| Error::format(F, "missing size line"))?;
    let size: Vec<usize> = size.split_whitespace().map(|s| parse(F, s)).collect::<Result<_>>()?;
    let [rows, cols, nnz] = size[..] else {
        return Err(Error::format(F, "size line needs three fields"));
    };
    if rows != cols {
        return Err(Error::format(F, "symmetric matrix must be square"));
    }
    let mut triplets = Vec::with_capacity(2 * nnz);
    for line in body {
        let line = line.map_err(io_err)?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [i, j, v] = fields[..] else {
            return Err(Error::format(F, format!("bad entry {line:?}")));
        };
        let (i, j, v): (usize, usize, f64) = (parse(F, i)?, parse(F, j)?, parse(F, v)?);
        if i == 0 || j == 0 || i > rows || j > rows || i < j {
            return Err(Error::format(F, format!("entry ({i}, {j}) outside the lower triangle")));
        }
        triplets.push((i - 1, j - 1, v));
        if i != j {
            triplets.push((j - 1, i - 1, v));
        }
    }
    let stored = triplets.iter().filter(|t| t.0 >= t.1).count();
    if stored != nnz {
        return Err(Error::format(F, format!("expected {nnz} entries, found {stored}")));
    }
    CsrMatrix::from_triplets(rows, triplets)
}

/// `index,mass` with 1-based indices.
pub fn write_mass_csv<W: Write>(w: W, mass: &[f64]) -> Result<()> {
    write_csv(
        w,
        "index,mass",
        mass.iter().enumerate().map(|(i, m)| format!("{},{}", i + 1, fmt_f64(*m))),
    )
}

pub fn read_mass_csv<R: BufRead>(r: R) -> Result<Vec<f64>> {
    read_indexed(r, "mass CSV", "index,mass", 1)
        .map(|rows| rows.into_iter().map(|mut r| r.remove(0)).collect())
}

/// `index,eigenvalue,residual` with 1-based indices.
pub fn write_eigenvalues_csv<W: Write>(w: W, eigenvalues: &[f64], residuals: &[f64]) -> Result<()> {
    check_dim(eigenvalues.len(), residuals.len())?;
    write_csv(
        w,
        "index,eigenvalue,residual",
        eigenvalues
            .iter()
            .zip(residuals)
            .enumerate()
            .map(|(i, (l, r))| format!("{},{},{}", i + 1, fmt_f64(*l), fmt_f64(*r))),
    )
}

/// Returns `(eigenvalues, residuals)`.
pub fn read_eigenvalues_csv<R: BufRead>(r: R) -> Result<(Vec<f64>, Vec<f64>)> {
    let rows = read_indexed(r, "eigenvalue CSV", "index,eigenvalue,residual", 1)?;
    Ok(rows.into_iter().map(|r| (r[0], r[1])).unzip())
}

/// Parses a CSV whose first column is `base, base+1, …` and whose remaining
/// columns are floats.
fn read_indexed<R: BufRead>(r: R, format: &'static str, header: &str, base: usize) -> Result<Vec<Vec<f64>>> {
    read_csv(r, format, header)?
        .into_iter()
        .enumerate()
        .map(|(k, fields)| {
            let index: usize = parse(format, &fields[0])?;
            if index != k + base {
                return Err(Error::format(format, format!("expected index {}, found {index}", k + base)));
            }
            fields[1..].iter().map(|f| parse(format, f)).collect()
        })
        .collect()
}

/// `boundary_index,value` with 0-based positions in the boundary cycle.
pub fn write_boundary_csv<W: Write>(w: W, f: &BoundaryData) -> Result<()> {
    write_csv(
        w,
        "boundary_index,value",
        f.values().iter().enumerate().map(|(i, v)| format!("{i},{}", fmt_f64(*v))),
    )
}

pub fn read_boundary_csv<R: BufRead>(r: R, level: u32) -> Result<BoundaryData> {
    let values = read_indexed(r, "boundary CSV", "boundary_index,value", 0)?
        .into_iter()
        .map(|mut r| r.remove(0))
        .collect();
    BoundaryData::new(level, values)
}

/// Sidecar describing an SNWV file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorSidecar {
    pub tool_version: String,
    /// Operator kind, or `harmonic-extension` for extension output.
    pub kind: String,
    pub level: u32,
    pub c0: f64,
    pub dimension: usize,
    pub count: usize,
    pub normalization: String,
    pub sign_rule: String,
    /// Mesh vertex of each row.
    pub vertex_map: Vec<usize>,
}

/// Writes `count` vectors of length `dim` stored consecutively in `data`.
pub fn write_snwv<W: Write>(mut w: W, dim: usize, data: &[f64]) -> Result<()> {
    let count = if dim == 0 { 0 } else { data.len() / dim };
    check_dim(dim * count, data.len())?;
    let mut buf = Vec::with_capacity(24 + 8 * data.len());
    buf.extend_from_slice(SNWV_MAGIC);
    buf.extend_from_slice(&SNWV_VERSION.to_le_bytes());
    buf.extend_from_slice(&(dim as u64).to_le_bytes());
    buf.extend_from_slice(&(count as u64).to_le_bytes());
    for x in data {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf).map_err(io_err)?;
    w.flush().map_err(io_err)
}

/// Returns `(dimension, count, values)`.
pub fn read_snwv<R: Read>(mut r: R) -> Result<(usize, usize, Vec<f64>)> {
    const F: &str = "SNWV";
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(io_err)?;
    if bytes.len() < 24 || &bytes[..4] != SNWV_MAGIC {
        return Err(Error::format(F, "missing magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != SNWV_VERSION {
        return Err(Error::format(F, format!("unsupported version {version}")));
    }
    let dim = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let count = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes")) as usize;
    let payload = &bytes[24..];
    let expected = dim
        .checked_mul(count)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::format(F, "size overflow"))?;
    if payload.len() != expected {
        return Err(Error::format(F, format!("expected {expected} payload bytes, found {}", payload.len())));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((dim, count, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_mesh;
    use crate::operator::{assemble, OperatorKind};

    #[test]
    fn mesh_json_round_trip_and_key_order() {
        let mesh = build_mesh(2).unwrap();
        let mut buf = Vec::new();
        write_mesh_json(&mut buf, &mesh).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let keys = ["\"level\"", "\"vertices\"", "\"triangles\"", "\"edges\"", "\"boundary_vertices\""];
        let positions: Vec<usize> = keys.iter().map(|k| text.find(k).unwrap()).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
        assert!(text.contains("\"b\"") && text.contains("\"i\""));
        assert_eq!(read_mesh_json(buf.as_slice()).unwrap(), mesh);
    }

    #[test]
    fn damaged_mesh_json_is_rejected() {
        let mesh = build_mesh(1).unwrap();
        let mut buf = Vec::new();
        write_mesh_json(&mut buf, &mesh).unwrap();
        let mut value: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        value["triangles"].as_array_mut().unwrap().pop();
        assert!(read_mesh_json(value.to_string().as_bytes()).is_err());

        let mut value: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        let flipped = if value["edges"][0][2] == "b" { "i" } else { "b" };
        value["edges"][0][2] = flipped.into();
        assert!(read_mesh_json(value.to_string().as_bytes()).is_err());
    }

    #[test]
    fn matrix_market_round_trip() {
        let op = assemble(&build_mesh(2).unwrap(), OperatorKind::Full, 0.3).unwrap();
        let mut buf = Vec::new();
        write_matrix_market(&mut buf, op.stiffness()).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(MATRIX_MARKET_HEADER));
        for line in text.lines().skip(2) {
            let f: Vec<usize> = line.split(' ').take(2).map(|s| s.parse().unwrap()).collect();
            assert!(f[0] >= f[1] && f[1] >= 1);
        }
        assert_eq!(&read_matrix_market(buf.as_slice()).unwrap(), op.stiffness());
        assert!(read_matrix_market("%%MatrixMarket matrix array real general\n".as_bytes()).is_err());
    }

    #[test]
    fn csv_round_trips() {
        let mass = vec![1.0 / 9.0, 0.25, 1e-300];
        let mut buf = Vec::new();
        write_mass_csv(&mut buf, &mass).unwrap();
        assert!(buf.starts_with(b"index,mass\n1,"));
        assert_eq!(read_mass_csv(buf.as_slice()).unwrap(), mass);

        let (l, r) = (vec![0.0, 15.1, 1.0 / 3.0], vec![1e-12, 0.0, 2.5e-9]);
        let mut buf = Vec::new();
        write_eigenvalues_csv(&mut buf, &l, &r).unwrap();
        assert_eq!(read_eigenvalues_csv(buf.as_slice()).unwrap(), (l, r));

        let f = BoundaryData::new(0, vec![1.0, -0.5, 0.1]).unwrap();
        let mut buf = Vec::new();
        write_boundary_csv(&mut buf, &f).unwrap();
        assert!(buf.starts_with(b"boundary_index,value\n0,1.0\n"));
        assert_eq!(read_boundary_csv(buf.as_slice(), 0).unwrap(), f);
        assert!(read_boundary_csv(buf.as_slice(), 1).is_err());
        assert!(read_mass_csv("index,mass\n2,1.0\n".as_bytes()).is_err());
    }

    #[test]
    fn snwv_round_trip_and_layout() {
        let data = vec![1.0, 2.0, 3.0, -4.0, 5.5, f64::MIN_POSITIVE];
        let mut buf = Vec::new();
        write_snwv(&mut buf, 3, &data).unwrap();
        assert_eq!(&buf[..4], b"SNWV");
        assert_eq!(buf.len(), 24 + 48);
        assert_eq!(u64::from_le_bytes(buf[16..24].try_into().unwrap()), 2);
        assert_eq!(read_snwv(buf.as_slice()).unwrap(), (3, 2, data.clone()));
        assert!(write_snwv(&mut Vec::new(), 4, &data).is_err());
        buf.pop();
        assert!(read_snwv(buf.as_slice()).is_err());
    }
}
