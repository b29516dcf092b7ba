//! Level-n triangulations of the closed Koch snowflake domain on an exact
//! triangular lattice.
//!
//! A level-n vertex is stored as integer coordinates `(a, b)` meaning
//! `a·e₁ + b·e₂` in units of `3^-n`, with `e₁ = (1, 0)` and
//! `e₂ = (1/2, √3/2)`. Two vertices coincide iff their integer pairs coincide,
//! so vertex deduplication and adjacency lookups involve no tolerances.

use std::collections::{BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest level [`build_mesh`] accepts unless the caller raises the guard.
pub const DEFAULT_MAX_LEVEL: u32 = 6;

/// Vertex of the scale-`3^-n` triangular lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LatticePoint {
    pub a: i64,
    pub b: i64,
}

impl LatticePoint {
    /// The six unit lattice steps, in counterclockwise order starting east.
    pub const NEIGHBOR_OFFSETS: [(i64, i64); 6] = [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)];

    pub const fn new(a: i64, b: i64) -> Self {
        Self { a, b }
    }

    pub fn step(self, (da, db): (i64, i64)) -> Self {
        Self::new(self.a + da, self.b + db)
    }

    /// Lattice (hexagonal) distance: number of unit steps between the points.
    pub fn lattice_distance(self, other: Self) -> i64 {
        let da = other.a - self.a;
        let db = other.b - self.b;
        (da.abs() + db.abs() + (da + db).abs()) / 2
    }

    /// Sign-carrying cross product in lattice coordinates. Positive iff
    /// `other` lies counterclockwise of `self` (the basis is right-handed).
    pub fn cross(self, other: Self) -> i64 {
        self.a * other.b - self.b * other.a
    }

    fn sub(self, other: Self) -> Self {
        Self::new(self.a - other.a, self.b - other.b)
    }

    fn combine(points: [Self; 3], weights: [i64; 3]) -> Self {
        let mut out = Self::new(0, 0);
        for (p, w) in points.iter().zip(weights) {
            out.a += w * p.a;
            out.b += w * p.b;
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    Interior,
    Boundary,
}

/// Mesh edge between vertex indices `lo < hi`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub lo: usize,
    pub hi: usize,
    pub kind: EdgeKind,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.kind == EdgeKind::Boundary
    }
}

/// Triangulation `Γ_n` of the closed level-n snowflake domain.
///
/// Immutable once built. Vertices are kept in lexicographic `(a, b)` order by
/// [`build_mesh`]; [`Mesh::from_triangles`] keeps whatever order it is given so
/// that [`validate`] can be pointed at damaged input.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    level: u32,
    vertices: Vec<LatticePoint>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<Edge>,
    boundary: Vec<bool>,
    boundary_vertices: Vec<usize>,
    index: HashMap<LatticePoint, usize>,
}

impl Mesh {
    /// Assembles a mesh from vertices and triangles, deriving edges (tagged
    /// boundary iff they lie in exactly one triangle), boundary flags and the
    /// boundary traversal. No invariant is enforced here; see [`validate`].
    pub fn from_triangles(level: u32, vertices: Vec<LatticePoint>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let nv = vertices.len();
        if let Some(&bad) = triangles.iter().flatten().find(|&&i| i >= nv) {
            return Err(Error::IndexOutOfRange { index: bad, len: nv });
        }

        let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &triangles {
            for (p, q) in triangle_edges(*t) {
                *counts.entry(ordered(p, q)).or_default() += 1;
            }
        }
        let mut edges: Vec<Edge> = counts
            .into_iter()
            .map(|((lo, hi), count)| Edge {
                lo,
                hi,
                kind: if count == 1 { EdgeKind::Boundary } else { EdgeKind::Interior },
            })
            .collect();
        edges.sort_unstable();

        let mut boundary = vec![false; nv];
        for e in edges.iter().filter(|e| e.is_boundary()) {
            boundary[e.lo] = true;
            boundary[e.hi] = true;
        }

        let mut index = HashMap::with_capacity(nv);
        for (i, &p) in vertices.iter().enumerate() {
            index.entry(p).or_insert(i);
        }

        let mut mesh = Self {
            level,
            vertices,
            triangles,
            edges,
            boundary,
            boundary_vertices: Vec::new(),
            index,
        };
        mesh.boundary_vertices = mesh
            .trace_boundary()
            .unwrap_or_else(|| (0..nv).filter(|&i| mesh.boundary[i]).collect());
        Ok(mesh)
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[LatticePoint] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary[v]
    }

    /// Boundary vertices in traversal order: counterclockwise around the
    /// snowflake, starting from the boundary vertex of smallest index.
    pub fn boundary_vertices(&self) -> &[usize] {
        &self.boundary_vertices
    }

    /// Interior vertex indices, ascending.
    pub fn interior_vertices(&self) -> Vec<usize> {
        (0..self.num_vertices()).filter(|&i| !self.boundary[i]).collect()
    }

    pub fn num_boundary_edges(&self) -> usize {
        self.edges.iter().filter(|e| e.is_boundary()).count()
    }

    /// Kind of the edge joining `p` and `q`, if there is one.
    pub fn edge_kind(&self, p: usize, q: usize) -> Option<EdgeKind> {
        let (lo, hi) = ordered(p, q);
        self.edges
            .binary_search_by(|e| (e.lo, e.hi).cmp(&(lo, hi)))
            .ok()
            .map(|i| self.edges[i].kind)
    }

    pub fn index_of(&self, p: LatticePoint) -> Option<usize> {
        self.index.get(&p).copied()
    }

    fn check_index(&self, v: usize) -> Result<()> {
        if v < self.num_vertices() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index: v,
                len: self.num_vertices(),
            })
        }
    }

    /// Cartesian position of vertex `v` for a level-0 triangle of unit side.
    pub fn cartesian(&self, v: usize) -> Result<(f64, f64)> {
        self.cartesian_scaled(v, 1.0)
    }

    /// Cartesian position with the level-0 side length set to `scale`.
    /// Display only: nothing spectral reads coordinates.
    pub fn cartesian_scaled(&self, v: usize, scale: f64) -> Result<(f64, f64)> {
        self.check_index(v)?;
        let p = self.vertices[v];
        let h = scale / 3f64.powi(self.level as i32);
        let x = (p.a as f64 + 0.5 * p.b as f64) * h;
        let y = p.b as f64 * (3f64.sqrt() / 2.0) * h;
        Ok((x, y))
    }

    /// Vertices one lattice step away from `v`, ascending.
    pub fn neighbors(&self, v: usize) -> Result<Vec<usize>> {
        self.check_index(v)?;
        let p = self.vertices[v];
        let mut out: Vec<usize> = LatticePoint::NEIGHBOR_OFFSETS
            .iter()
            .filter_map(|&d| self.index_of(p.step(d)))
            .collect();
        out.sort_unstable();
        Ok(out)
    }

    /// Number of mesh edges incident to each vertex.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_vertices()];
        for e in &self.edges {
            deg[e.lo] += 1;
            deg[e.hi] += 1;
        }
        deg
    }

    /// Unweighted graph distance (hop count) from every vertex to the nearest
    /// boundary vertex. Boundary vertices are at distance 0; vertices that
    /// cannot reach the boundary get `usize::MAX`.
    pub fn boundary_distance(&self) -> Vec<usize> {
        let adjacency = self.adjacency();
        let mut dist = vec![usize::MAX; self.num_vertices()];
        let mut queue = VecDeque::new();
        for v in (0..self.num_vertices()).filter(|&v| self.boundary[v]) {
            dist[v] = 0;
            queue.push_back(v);
        }
        while let Some(v) = queue.pop_front() {
            for &w in &adjacency[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Edge-list adjacency (as opposed to the lattice lookup in [`Mesh::neighbors`]).
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_vertices()];
        for e in &self.edges {
            adj[e.lo].push(e.hi);
            adj[e.hi].push(e.lo);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    fn trace_boundary(&self) -> Option<Vec<usize>> {
        let mut next: HashMap<usize, Vec<usize>> = HashMap::new();
        for e in self.edges.iter().filter(|e| e.is_boundary()) {
            next.entry(e.lo).or_default().push(e.hi);
            next.entry(e.hi).or_default().push(e.lo);
        }
        if next.is_empty() || next.values().any(|n| n.len() != 2) {
            return None;
        }

        let mut third: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &self.triangles {
            for (k, (p, q)) in triangle_edges(*t).into_iter().enumerate() {
                third.insert(ordered(p, q), t[(k + 2) % 3]);
            }
        }

        let start = *next.keys().min()?;
        let ccw = |from: usize, to: usize| -> bool {
            let r = third[&ordered(from, to)];
            let o = self.vertices[from];
            self.vertices[to].sub(o).cross(self.vertices[r].sub(o)) > 0
        };
        let first = next[&start].iter().copied().find(|&to| ccw(start, to))?;

        let mut cycle = vec![start];
        let (mut prev, mut cur) = (start, first);
        while cur != start {
            if cycle.len() > next.len() {
                return None;
            }
            cycle.push(cur);
            let n = &next[&cur];
            let after = if n[0] == prev { n[1] } else { n[0] };
            prev = cur;
            cur = after;
        }
        (cycle.len() == next.len()).then_some(cycle)
    }
}

fn ordered(p: usize, q: usize) -> (usize, usize) {
    if p < q {
        (p, q)
    } else {
        (q, p)
    }
}

fn triangle_edges(t: [usize; 3]) -> [(usize, usize); 3] {
    [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])]
}

/// Builds `Γ_n` with the default level guard.
pub fn build_mesh(level: u32) -> Result<Mesh> {
    build_mesh_with_guard(level, DEFAULT_MAX_LEVEL)
}

/// Builds `Γ_n`, refusing levels above `max_level`.
///
/// Starts from the unit triangle and repeats `level` times: rescale by 3,
/// split every triangle into nine, and attach an outward triangle to the
/// middle third of every boundary edge.
pub fn build_mesh_with_guard(level: u32, max_level: u32) -> Result<Mesh> {
    if level > max_level {
        return Err(Error::Resource {
            what: "mesh level",
            requested: level as usize,
            limit: max_level as usize,
        });
    }

    let mut triangles = vec![[LatticePoint::new(0, 0), LatticePoint::new(1, 0), LatticePoint::new(0, 1)]];
    for _ in 0..level {
        triangles = refine(&triangles);
    }

    let vertex_set: BTreeSet<LatticePoint> = triangles.iter().flatten().copied().collect();
    let vertices: Vec<LatticePoint> = vertex_set.into_iter().collect();
    let position = |p: &LatticePoint| vertices.binary_search(p).expect("vertex collected above");
    let mut indexed: Vec<[usize; 3]> = triangles
        .iter()
        .map(|t| {
            let mut idx = [position(&t[0]), position(&t[1]), position(&t[2])];
            idx.sort_unstable();
            idx
        })
        .collect();
    indexed.sort_unstable();
    indexed.dedup();

    Mesh::from_triangles(level, vertices, indexed)
}

fn refine(triangles: &[[LatticePoint; 3]]) -> Vec<[LatticePoint; 3]> {
    // Boundary edges of the current level, each with the opposite vertex of
    // its only triangle.
    let mut edge_info: HashMap<(LatticePoint, LatticePoint), (usize, LatticePoint)> = HashMap::new();
    for t in triangles {
        for k in 0..3 {
            let (p, q, r) = (t[k], t[(k + 1) % 3], t[(k + 2) % 3]);
            let key = if p < q { (p, q) } else { (q, p) };
            let entry = edge_info.entry(key).or_insert((0, r));
            entry.0 += 1;
        }
    }

    let mut out = Vec::with_capacity(9 * triangles.len() + edge_info.len());
    for &t in triangles {
        // Barycentric lattice points (i, j, k)/3 of the parent become
        // i·P + j·Q + k·R after rescaling by 3.
        for i in 0..3i64 {
            for j in 0..3 - i {
                let k = 2 - i - j;
                out.push([
                    LatticePoint::combine(t, [i + 1, j, k]),
                    LatticePoint::combine(t, [i, j + 1, k]),
                    LatticePoint::combine(t, [i, j, k + 1]),
                ]);
            }
        }
        for i in 0..2i64 {
            for j in 0..2 - i {
                let k = 1 - i - j;
                out.push([
                    LatticePoint::combine(t, [i, j + 1, k + 1]),
                    LatticePoint::combine(t, [i + 1, j, k + 1]),
                    LatticePoint::combine(t, [i + 1, j + 1, k]),
                ]);
            }
        }
    }

    let mut boundary: Vec<_> = edge_info
        .into_iter()
        .filter(|(_, (count, _))| *count == 1)
        .map(|((p, q), (_, r))| (p, q, r))
        .collect();
    boundary.sort_unstable();
    for (p, q, r) in boundary {
        // The appended triangle is the reflection of the middle sub-triangle
        // across the boundary edge, so it points away from the domain.
        out.push([
            LatticePoint::combine([p, q, r], [2, 1, 0]),
            LatticePoint::combine([p, q, r], [1, 2, 0]),
            LatticePoint::combine([p, q, r], [2, 2, -1]),
        ]);
    }
    out
}

/// Outcome of one mesh invariant.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct InvariantCheck {
    pub name: &'static str,
    pub passed: bool,
    /// Offending vertex (or triangle, for triangle invariants) indices.
    pub counterexamples: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<InvariantCheck>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&InvariantCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &InvariantCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

const MAX_COUNTEREXAMPLES: usize = 16;

fn check(name: &'static str, mut bad: Vec<usize>) -> InvariantCheck {
    bad.truncate(MAX_COUNTEREXAMPLES);
    InvariantCheck {
        name,
        passed: bad.is_empty(),
        counterexamples: bad,
    }
}

fn flag(name: &'static str, ok: bool) -> InvariantCheck {
    InvariantCheck {
        name,
        passed: ok,
        counterexamples: Vec::new(),
    }
}

/// Checks every structural invariant of a level-n snowflake mesh.
pub fn validate(mesh: &Mesh) -> ValidationReport {
    let n = mesh.level;
    let nv = mesh.num_vertices();
    let verts = &mesh.vertices;
    let mut checks = Vec::new();

    checks.push(check(
        "canonical_vertex_order",
        (1..nv).filter(|&i| verts[i - 1] >= verts[i]).collect(),
    ));

    checks.push(check(
        "unit_edge_length",
        mesh.edges
            .iter()
            .filter(|e| verts[e.lo].lattice_distance(verts[e.hi]) != 1)
            .map(|e| e.lo)
            .collect(),
    ));

    let mut incidence: HashMap<(usize, usize), usize> = HashMap::new();
    for t in &mesh.triangles {
        for (p, q) in triangle_edges(*t) {
            *incidence.entry(ordered(p, q)).or_default() += 1;
        }
    }
    let mut over: Vec<usize> = incidence
        .iter()
        .filter(|(_, &c)| !(1..=2).contains(&c))
        .map(|(&(p, _), _)| p)
        .collect();
    over.sort_unstable();
    checks.push(check("edge_triangle_incidence", over));

    let expected_boundary = 3 * 4usize.pow(n);
    let boundary_vertex_count = mesh.boundary.iter().filter(|&&b| b).count();
    checks.push(flag(
        "boundary_counts",
        boundary_vertex_count == expected_boundary && mesh.num_boundary_edges() == expected_boundary,
    ));

    let degrees = mesh.degrees();
    checks.push(check(
        "vertex_degree",
        (0..nv)
            .filter(|&v| {
                if mesh.boundary[v] {
                    !matches!(degrees[v], 2 | 5)
                } else {
                    degrees[v] != 6
                }
            })
            .collect(),
    ));

    let euler = nv as i64 - mesh.edges.len() as i64 + mesh.triangles.len() as i64;
    checks.push(flag("euler_characteristic", euler == 1));

    let mut on_boundary_edge = vec![false; nv];
    for e in mesh.edges.iter().filter(|e| e.is_boundary()) {
        on_boundary_edge[e.lo] = true;
        on_boundary_edge[e.hi] = true;
    }
    checks.push(check(
        "boundary_vertex_iff_boundary_edge",
        (0..nv).filter(|&v| on_boundary_edge[v] != mesh.boundary[v]).collect(),
    ));

    let adjacency = mesh.adjacency();
    checks.push(check(
        "lattice_adjacency",
        (0..nv)
            .filter(|&v| mesh.neighbors(v).map(|nb| nb != adjacency[v]).unwrap_or(true))
            .collect(),
    ));

    let traced = mesh.trace_boundary();
    checks.push(flag(
        "boundary_simple_cycle",
        traced.is_some_and(|c| c.len() == boundary_vertex_count && c == mesh.boundary_vertices),
    ));

    ValidationReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_zero_is_one_triangle() {
        let m = build_mesh(0).unwrap();
        assert_eq!(m.num_vertices(), 3);
        assert_eq!(m.triangles().len(), 1);
        assert_eq!(m.num_boundary_edges(), 3);
        assert!(m.interior_vertices().is_empty());
        assert_eq!(m.neighbors(0).unwrap().len(), 2);
    }

    #[test]
    fn level_one_star() {
        let m = build_mesh(1).unwrap();
        assert_eq!(m.num_vertices(), 13);
        assert_eq!(m.triangles().len(), 12);
        assert_eq!(m.edges().len(), 24);
        let interior = m.interior_vertices();
        assert_eq!(interior.len(), 1);
        assert_eq!(m.vertices()[interior[0]], LatticePoint::new(1, 1));
        assert_eq!(m.neighbors(interior[0]).unwrap().len(), 6);
    }

    #[test]
    fn cartesian_coordinates() {
        let m = build_mesh(1).unwrap();
        let at = |a, b| m.index_of(LatticePoint::new(a, b)).unwrap();
        assert_eq!(m.cartesian(at(0, 0)).unwrap(), (0.0, 0.0));
        let (x, y) = m.cartesian(at(3, 0)).unwrap();
        assert!((x - 1.0).abs() < 1e-15 && y.abs() < 1e-15);
        let (x, y) = m.cartesian(at(0, 3)).unwrap();
        assert!((x - 0.5).abs() < 1e-15 && (y - 3f64.sqrt() / 2.0).abs() < 1e-15);
        assert!(matches!(m.cartesian(13), Err(Error::IndexOutOfRange { index: 13, len: 13 })));
        assert!(m.neighbors(99).is_err());
    }

    #[test]
    fn tips_have_two_neighbors() {
        let m = build_mesh(3).unwrap();
        let degrees = m.degrees();
        let tips: Vec<usize> = (0..m.num_vertices()).filter(|&v| degrees[v] == 2).collect();
        assert!(!tips.is_empty());
        for v in tips {
            assert!(m.is_boundary(v));
            assert_eq!(m.neighbors(v).unwrap().len(), 2);
        }
    }

    #[test]
    fn guard_rejects_deep_levels() {
        assert!(matches!(
            build_mesh(7),
            Err(Error::Resource { requested: 7, limit: 6, .. })
        ));
        assert!(build_mesh_with_guard(2, 1).is_err());
    }

    #[test]
    fn level_two_validates() {
        let report = validate(&build_mesh(2).unwrap());
        assert!(report.all_passed(), "{report:?}");
    }

    #[test]
    fn deleting_a_triangle_breaks_euler() {
        let m = build_mesh(2).unwrap();
        let centre = m.index_of(LatticePoint::new(4, 4)).unwrap();
        let mut tris = m.triangles().to_vec();
        let victim = tris.iter().position(|t| t.contains(&centre)).unwrap();
        tris.remove(victim);
        let broken = Mesh::from_triangles(2, m.vertices().to_vec(), tris).unwrap();
        let report = validate(&broken);
        assert!(!report.check("euler_characteristic").unwrap().passed);
    }

    #[test]
    fn duplicated_vertex_breaks_degree() {
        let m = build_mesh(2).unwrap();
        let mut verts = m.vertices().to_vec();
        verts.push(verts[5]);
        let broken = Mesh::from_triangles(2, verts, m.triangles().to_vec()).unwrap();
        let report = validate(&broken);
        let degree = report.check("vertex_degree").unwrap();
        assert!(!degree.passed);
        assert!(degree.counterexamples.contains(&m.num_vertices()));
    }

    #[test]
    fn boundary_distance_of_level_one_centre() {
        let m = build_mesh(1).unwrap();
        let d = m.boundary_distance();
        let centre = m.interior_vertices()[0];
        assert_eq!(d[centre], 1);
        assert_eq!(d.iter().filter(|&&x| x == 0).count(), 12);
    }
}
