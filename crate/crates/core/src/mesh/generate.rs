use std::collections::HashMap;

use super::{signed_volume, FaceLabel, Point, TetMesh};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainKind {
    Box,
    BoxWithCavity,
}

/// One of the six sides of the unit cube.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoxSide {
    XMin,
    XMax,
    YMin,
    YMax,
    ZMin,
    ZMax,
}

impl BoxSide {
    pub const ALL: [BoxSide; 6] =
        [BoxSide::XMin, BoxSide::XMax, BoxSide::YMin, BoxSide::YMax, BoxSide::ZMin, BoxSide::ZMax];

    pub fn axis(self) -> usize {
        match self {
            BoxSide::XMin | BoxSide::XMax => 0,
            BoxSide::YMin | BoxSide::YMax => 1,
            BoxSide::ZMin | BoxSide::ZMax => 2,
        }
    }

    pub fn coordinate(self) -> f64 {
        match self {
            BoxSide::XMin | BoxSide::YMin | BoxSide::ZMin => 0.0,
            _ => 1.0,
        }
    }
}

/// Rule assigning boundary faces to Γ_i / Γ_o.
#[derive(Debug, Clone, PartialEq)]
pub enum ImpedanceAssignment {
    /// Plain box: `x = 0` is Γ_i. Cavity: the cavity surface is Γ_i. Everything else Γ_o.
    Default,
    /// Γ_i is empty.
    AllGammaO,
    /// The listed outer sides (and the cavity surface, if any) are Γ_i.
    Sides(Vec<BoxSide>),
}

impl ImpedanceAssignment {
    fn outer_label(&self, kind: DomainKind, side: BoxSide) -> FaceLabel {
        match self {
            ImpedanceAssignment::Default if kind == DomainKind::Box && side == BoxSide::XMin => {
                FaceLabel::GammaI
            }
            ImpedanceAssignment::Sides(s) if s.contains(&side) => FaceLabel::GammaI,
            _ => FaceLabel::GammaO,
        }
    }

    fn cavity_label(&self) -> FaceLabel {
        match self {
            ImpedanceAssignment::AllGammaO => FaceLabel::GammaO,
            _ => FaceLabel::GammaI,
        }
    }
}

/// Axis-aligned box `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn cube(lo: f64, hi: f64) -> Self {
        Self { min: [lo; 3], max: [hi; 3] }
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0..3).all(|d| p[d] > self.min[d] && p[d] < self.max[d])
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|d| self.max[d] - self.min[d]).product()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    pub kind: DomainKind,
    /// Subdivisions per axis of the unit cube.
    pub n: usize,
    /// Removed sub-box; only used for [`DomainKind::BoxWithCavity`].
    pub cavity: Option<Aabb>,
    pub assignment: ImpedanceAssignment,
}

impl DomainSpec {
    pub fn unit_box(n: usize) -> Self {
        Self { kind: DomainKind::Box, n, cavity: None, assignment: ImpedanceAssignment::Default }
    }

    pub fn box_with_cavity(n: usize, cavity: Aabb) -> Self {
        Self {
            kind: DomainKind::BoxWithCavity,
            n,
            cavity: Some(cavity),
            assignment: ImpedanceAssignment::Default,
        }
    }

    pub fn with_assignment(mut self, assignment: ImpedanceAssignment) -> Self {
        self.assignment = assignment;
        self
    }

    /// Outer box sides carrying Γ_o under this spec's assignment.
    pub fn gamma_o_sides(&self) -> Vec<BoxSide> {
        BoxSide::ALL
            .into_iter()
            .filter(|s| self.assignment.outer_label(self.kind, *s) == FaceLabel::GammaO)
            .collect()
    }

    pub fn domain_volume(&self) -> f64 {
        match (self.kind, self.cavity) {
            (DomainKind::BoxWithCavity, Some(c)) => 1.0 - c.volume(),
            _ => 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidSpec("n must be at least 1".into()));
        }
        if self.kind == DomainKind::BoxWithCavity {
            let c = self
                .cavity
                .ok_or_else(|| Error::InvalidSpec("box-with-cavity requires a cavity extent".into()))?;
            let n = self.n as f64;
            for d in 0..3 {
                if !(0.0 < c.min[d] && c.min[d] < c.max[d] && c.max[d] < 1.0) {
                    return Err(Error::InvalidSpec(format!(
                        "cavity must lie strictly inside the unit box (axis {d})"
                    )));
                }
                for v in [c.min[d], c.max[d]] {
                    if ((v * n).round() - v * n).abs() > 1e-9 {
                        return Err(Error::InvalidSpec(format!(
                            "cavity coordinate {v} is not aligned with the n={} grid",
                            self.n
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn generate(spec: &DomainSpec) -> Result<TetMesh> {
    spec.validate()?;
    let n = spec.n;
    let np = n + 1;
    let vid = |i: usize, j: usize, k: usize| i + np * (j + np * k);
    let h = 1.0 / n as f64;

    let cavity_cells = match (spec.kind, spec.cavity) {
        (DomainKind::BoxWithCavity, Some(c)) => Some(c),
        _ => None,
    };

    let mut raw_tets = Vec::with_capacity(6 * n * n * n);
    let all_vertices: Vec<Point> = (0..np * np * np)
        .map(|id| {
            let i = id % np;
            let j = (id / np) % np;
            let k = id / (np * np);
            Point::new(i as f64 / n as f64, j as f64 / n as f64, k as f64 / n as f64)
        })
        .collect();

    // Kuhn subdivision: one tet per monotone lattice path from the cube's
    // min corner to its max corner.
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                if let Some(c) = cavity_cells {
                    let center = Point::new((i as f64 + 0.5) * h, (j as f64 + 0.5) * h, (k as f64 + 0.5) * h);
                    if c.contains(&center) {
                        continue;
                    }
                }
                for perm in PERMS {
                    let mut idx = [i, j, k];
                    let mut tet = [vid(i, j, k); 4];
                    for (s, axis) in perm.iter().enumerate() {
                        idx[*axis] += 1;
                        tet[s + 1] = vid(idx[0], idx[1], idx[2]);
                    }
                    if signed_volume(&all_vertices, &tet) < 0.0 {
                        tet.swap(2, 3);
                    }
                    raw_tets.push(tet);
                }
            }
        }
    }

    // compact vertex numbering (cavity interiors leave unused vertices)
    let mut remap = vec![usize::MAX; all_vertices.len()];
    let mut vertices = Vec::new();
    for tet in &raw_tets {
        for &v in tet {
            if remap[v] == usize::MAX {
                remap[v] = usize::MAX - 1;
            }
        }
    }
    for (v, r) in remap.iter_mut().enumerate() {
        if *r != usize::MAX {
            *r = vertices.len();
            vertices.push(all_vertices[v]);
        }
    }
    let tets: Vec<[usize; 4]> = raw_tets.iter().map(|t| t.map(|v| remap[v])).collect();

    // boundary faces: appear once across all tets
    let mut counts: HashMap<[usize; 3], usize> = HashMap::new();
    for tet in &tets {
        for local in super::LOCAL_FACES {
            let mut key = local.map(|l| tet[l]);
            key.sort_unstable();
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    let mut boundary = HashMap::new();
    for (key, c) in counts {
        if c != 1 {
            continue;
        }
        let pts = key.map(|v| vertices[v]);
        let side = BoxSide::ALL
            .into_iter()
            .find(|s| pts.iter().all(|p| (p[s.axis()] - s.coordinate()).abs() < 1e-12));
        let label = match side {
            Some(s) => spec.assignment.outer_label(spec.kind, s),
            None => spec.assignment.cavity_label(),
        };
        boundary.insert(key, label);
    }

    TetMesh::from_parts(vertices, tets, &boundary)
}

/// Unit cube split into `n³` subcubes of six Kuhn tets each.
pub fn generate_box(spec: &DomainSpec) -> Result<TetMesh> {
    if spec.kind != DomainKind::Box {
        return Err(Error::InvalidSpec("generate_box requires kind = Box".into()));
    }
    generate(spec)
}

/// Unit cube with the grid-aligned cavity cells removed.
pub fn generate_box_with_cavity(spec: &DomainSpec) -> Result<TetMesh> {
    if spec.kind != DomainKind::BoxWithCavity {
        return Err(Error::InvalidSpec("generate_box_with_cavity requires kind = BoxWithCavity".into()));
    }
    generate(spec)
}
