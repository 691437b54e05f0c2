//! Plain-text mesh format.
//!
//! ```text
//! tetmesh v1
//! vertices N
//! x y z            (N lines, 17 significant digits)
//! tets T
//! a b c d          (T lines, zero-based vertex ids)
//! boundary F
//! v0 v1 v2 label   (F lines, label ∈ {i, o})
//! ```

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{FaceLabel, Point, TetMesh};
use crate::{Error, Result};

pub fn write_mesh_to<W: Write>(mesh: &TetMesh, mut w: W) -> Result<()> {
    writeln!(w, "tetmesh v1")?;
    writeln!(w, "vertices {}", mesh.num_vertices())?;
    for p in mesh.vertices() {
        writeln!(w, "{:.16e} {:.16e} {:.16e}", p.x, p.y, p.z)?;
    }
    writeln!(w, "tets {}", mesh.num_tets())?;
    for t in mesh.tets() {
        writeln!(w, "{} {} {} {}", t[0], t[1], t[2], t[3])?;
    }
    let boundary: Vec<(usize, FaceLabel)> = mesh
        .face_labels()
        .iter()
        .enumerate()
        .filter(|(_, l)| **l != FaceLabel::Interior)
        .map(|(f, l)| (f, *l))
        .collect();
    writeln!(w, "boundary {}", boundary.len())?;
    for (f, l) in boundary {
        let v = mesh.faces()[f];
        let tag = if l == FaceLabel::GammaI { 'i' } else { 'o' };
        writeln!(w, "{} {} {} {}", v[0], v[1], v[2], tag)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_mesh(mesh: &TetMesh, path: impl AsRef<Path>) -> Result<()> {
    write_mesh_to(mesh, BufWriter::new(File::create(path)?))
}

pub fn read_mesh(path: impl AsRef<Path>) -> Result<TetMesh> {
    read_mesh_from(BufReader::new(File::open(path)?))
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next_line(&mut self) -> Result<String> {
        loop {
            self.line += 1;
            match self.inner.next() {
                Some(l) => {
                    let l = l?;
                    if !l.trim().is_empty() {
                        return Ok(l);
                    }
                }
                None => return Err(self.err("unexpected end of file")),
            }
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse { line: self.line, msg: msg.into() }
    }

    fn section(&mut self, name: &str) -> Result<usize> {
        let l = self.next_line()?;
        let mut it = l.split_whitespace();
        if it.next() != Some(name) {
            return Err(self.err(format!("expected `{name} <count>`")));
        }
        let count = it
            .next()
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| self.err(format!("bad {name} count")))?;
        if it.next().is_some() {
            return Err(self.err("trailing tokens"));
        }
        Ok(count)
    }

    fn fields<T: std::str::FromStr>(&mut self, n: usize) -> Result<Vec<T>> {
        let l = self.next_line()?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != n {
            return Err(self.err(format!("expected {n} fields, found {}", toks.len())));
        }
        toks.iter()
            .map(|t| t.parse::<T>().map_err(|_| self.err(format!("cannot parse `{t}`"))))
            .collect()
    }
}

pub fn read_mesh_from<R: Read>(r: R) -> Result<TetMesh> {
    let mut lines = Lines { inner: BufReader::new(r).lines(), line: 0 };
    if lines.next_line()?.trim() != "tetmesh v1" {
        return Err(lines.err("missing `tetmesh v1` header"));
    }

    let nv = lines.section("vertices")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let c: Vec<f64> = lines.fields(3)?;
        vertices.push(Point::new(c[0], c[1], c[2]));
    }

    let nt = lines.section("tets")?;
    let tets_line = lines.line;
    let mut tets = Vec::with_capacity(nt);
    let mut seen = HashSet::new();
    for _ in 0..nt {
        let ids: Vec<usize> = lines.fields(4)?;
        if let Some(v) = ids.iter().find(|&&v| v >= nv) {
            return Err(lines.err(format!("vertex id {v} out of range (have {nv})")));
        }
        let mut key = [ids[0], ids[1], ids[2], ids[3]];
        key.sort_unstable();
        if key.windows(2).any(|w| w[0] == w[1]) {
            return Err(lines.err("repeated vertex in tet"));
        }
        if !seen.insert(key) {
            return Err(lines.err("duplicated tet"));
        }
        tets.push([ids[0], ids[1], ids[2], ids[3]]);
    }

    let nb = lines.section("boundary")?;
    let mut boundary = HashMap::with_capacity(nb);
    for _ in 0..nb {
        let l = lines.next_line()?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 4 {
            return Err(lines.err("expected `v0 v1 v2 label`"));
        }
        let mut key = [0usize; 3];
        for (k, t) in toks[..3].iter().enumerate() {
            key[k] = t.parse().map_err(|_| lines.err(format!("cannot parse `{t}`")))?;
            if key[k] >= nv {
                return Err(lines.err(format!("vertex id {} out of range (have {nv})", key[k])));
            }
        }
        key.sort_unstable();
        let label = match toks[3] {
            "i" => FaceLabel::GammaI,
            "o" => FaceLabel::GammaO,
            other => return Err(lines.err(format!("unknown label `{other}`"))),
        };
        if boundary.insert(key, label).is_some() {
            return Err(lines.err("duplicated boundary face"));
        }
    }

    TetMesh::from_parts(vertices, tets, &boundary).map_err(|e| match e {
        Error::InvalidSpec(msg) => Error::Parse { line: tets_line, msg },
        other => other,
    })
}

/// Writes and re-reads `mesh` through the text format.
pub fn roundtrip(mesh: &TetMesh) -> Result<TetMesh> {
    let mut buf = Vec::new();
    write_mesh_to(mesh, &mut buf)?;
    read_mesh_from(buf.as_slice())
}
