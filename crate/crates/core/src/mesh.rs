//! Conforming triangulations of the parameter triangle.
//!
//! Vertices are stored twice: as floating-point positions and as exact dyadic
//! barycentric coordinates with respect to the root triangle. Midpoints are
//! computed on the dyadic coordinates, so a vertex created from either side of
//! an edge is recognised as the same vertex bit for bit.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of the parameter (reciprocal) space.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct WaveVector {
    pub k1: f64,
    pub k2: f64,
}

impl WaveVector {
    pub const fn new(k1: f64, k2: f64) -> Self {
        Self { k1, k2 }
    }

    pub fn norm(self) -> f64 {
        self.k1.hypot(self.k2)
    }

    pub fn dot(self, other: Self) -> f64 {
        self.k1 * other.k1 + self.k2 * other.k2
    }

    pub fn dist(self, other: Self) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.k1.is_finite() && self.k2.is_finite()
    }

    /// Bit pattern key, used for memoisation.
    pub fn bits(self) -> (u64, u64) {
        (self.k1.to_bits(), self.k2.to_bits())
    }
}

impl std::ops::Add for WaveVector {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.k1 + o.k1, self.k2 + o.k2)
    }
}

impl std::ops::Sub for WaveVector {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.k1 - o.k1, self.k2 - o.k2)
    }
}

impl std::ops::Mul<f64> for WaveVector {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        Self::new(self.k1 * s, self.k2 * s)
    }
}

/// Twice the signed area of the triangle (a, b, c).
pub fn signed_area2(a: WaveVector, b: WaveVector, c: WaveVector) -> f64 {
    (b.k1 - a.k1) * (c.k2 - a.k2) - (b.k2 - a.k2) * (c.k1 - a.k1)
}

/// Barycentric coordinates of `p` with respect to the triangle `tri`.
pub fn barycentric(tri: &[WaveVector; 3], p: WaveVector) -> [f64; 3] {
    let d = signed_area2(tri[0], tri[1], tri[2]);
    let l1 = signed_area2(p, tri[1], tri[2]) / d;
    let l2 = signed_area2(tri[0], p, tri[2]) / d;
    [l1, l2, 1.0 - l1 - l2]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vertex {
    pub id: usize,
    pub position: WaveVector,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Element {
    pub id: usize,
    /// Counterclockwise vertex ids.
    pub vertices: [usize; 3],
    /// Number of bisections this element's ancestry has undergone.
    pub refinement_count: u32,
    /// Containing element of the previous generation.
    pub parent: Option<usize>,
}

/// Undirected face key `(min id, max id)`.
pub type FaceKey = (usize, usize);

pub fn face_key(a: usize, b: usize) -> FaceKey {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Exponent of the common denominator of dyadic barycentric coordinates.
const DYADIC_BITS: u32 = 60;
const DYADIC_ONE: u64 = 1 << DYADIC_BITS;

/// Exact barycentric coordinates `(l2, l3) / 2^60` relative to the root
/// triangle; the first coordinate is implied.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Dyadic(u64, u64);

impl Dyadic {
    fn midpoint(self, other: Self) -> Option<Self> {
        let a = self.0 + other.0;
        let b = self.1 + other.1;
        (a.is_multiple_of(2) && b.is_multiple_of(2)).then_some(Dyadic(a / 2, b / 2))
    }

    fn first(self) -> u64 {
        DYADIC_ONE - self.0 - self.1
    }

    /// Whether the point lies on root edge `i` (opposite root vertex `i`).
    fn on_root_edge(self, i: usize) -> bool {
        match i {
            0 => self.first() == 0,
            1 => self.0 == 0,
            _ => self.1 == 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ParamMesh {
    domain: [WaveVector; 3],
    vertices: Vec<Vertex>,
    dyadic: Vec<Dyadic>,
    elements: Vec<Element>,
    generation: u32,
    faces: BTreeMap<FaceKey, Vec<usize>>,
    index: OnceLock<LocateIndex>,
}

impl PartialEq for ParamMesh {
    fn eq(&self, other: &Self) -> bool {
        self.domain == other.domain
            && self.vertices == other.vertices
            && self.elements == other.elements
            && self.generation == other.generation
    }
}

impl ParamMesh {
    /// Red (midpoint) refinement of the domain triangle, `4^levels` congruent
    /// elements, generation 1.
    pub fn uniform(domain: [WaveVector; 3], levels: u32) -> Result<Self> {
        if domain.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput("non-finite domain vertex".into()));
        }
        let area2 = signed_area2(domain[0], domain[1], domain[2]);
        let scale = domain
            .iter()
            .map(|p| p.norm())
            .fold(0.0, f64::max)
            .max(1.0);
        if !(area2.abs() > 1e-14 * scale * scale) {
            return Err(Error::DegenerateTriangle(area2 / 2.0));
        }
        if levels > 20 {
            return Err(Error::InvalidInput(format!("{levels} red levels is too many")));
        }
        // Normalise to counterclockwise order.
        let domain = if area2 < 0.0 {
            [domain[0], domain[2], domain[1]]
        } else {
            domain
        };
        let n = 1u64 << levels;
        let step = DYADIC_ONE / n;
        let mut index = HashMap::new();
        let mut dyadic = Vec::new();
        for j in 0..=n {
            for i in 0..=(n - j) {
                index.insert((i, j), dyadic.len());
                dyadic.push(Dyadic(i * step, j * step));
            }
        }
        let mut elements = Vec::new();
        let mut push = |v: [usize; 3]| {
            let id = elements.len();
            elements.push(Element {
                id,
                vertices: v,
                refinement_count: 0,
                parent: None,
            });
        };
        for j in 0..n {
            for i in 0..(n - j) {
                push([index[&(i, j)], index[&(i + 1, j)], index[&(i, j + 1)]]);
                if i + j + 1 < n {
                    push([index[&(i + 1, j)], index[&(i + 1, j + 1)], index[&(i, j + 1)]]);
                }
            }
        }
        Ok(Self::assemble(domain, dyadic, elements, 1))
    }

    fn assemble(
        domain: [WaveVector; 3],
        dyadic: Vec<Dyadic>,
        elements: Vec<Element>,
        generation: u32,
    ) -> Self {
        let vertices = dyadic
            .iter()
            .enumerate()
            .map(|(id, d)| Vertex {
                id,
                position: dyadic_position(&domain, *d),
            })
            .collect();
        let mut faces: BTreeMap<FaceKey, Vec<usize>> = BTreeMap::new();
        for e in &elements {
            for f in 0..3 {
                let (a, b) = (e.vertices[(f + 1) % 3], e.vertices[(f + 2) % 3]);
                faces.entry(face_key(a, b)).or_default().push(e.id);
            }
        }
        Self {
            domain,
            vertices,
            dyadic,
            elements,
            generation,
            faces,
            index: OnceLock::new(),
        }
    }

    pub fn domain(&self) -> [WaveVector; 3] {
        self.domain
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn generation(&self) -> u32 {
        self.generation
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    /// Faces with their incident elements (ascending ids).
    pub fn faces(&self) -> &BTreeMap<FaceKey, Vec<usize>> {
        &self.faces
    }

    /// Same mesh, relabelled with another generation number. Used when
    /// refinement loops mark nothing and the mesh stays put.
    pub fn with_generation(&self, generation: u32) -> Self {
        let mut m = self.clone();
        m.generation = generation;
        m
    }

    pub fn element(&self, id: usize) -> Result<&Element> {
        self.elements.get(id).ok_or(Error::UnknownElement(id))
    }

    pub fn position(&self, vertex: usize) -> WaveVector {
        self.vertices[vertex].position
    }

    pub fn element_points(&self, id: usize) -> Result<[WaveVector; 3]> {
        let e = self.element(id)?;
        Ok(e.vertices.map(|v| self.position(v)))
    }

    /// Element diameter h_T (longest edge).
    pub fn diameter(&self, id: usize) -> Result<f64> {
        let p = self.element_points(id)?;
        Ok(p[0].dist(p[1]).max(p[1].dist(p[2])).max(p[2].dist(p[0])))
    }

    pub fn area(&self, id: usize) -> Result<f64> {
        let p = self.element_points(id)?;
        Ok(signed_area2(p[0], p[1], p[2]) / 2.0)
    }

    /// h_T / rho_T with rho_T the inscribed-circle diameter.
    pub fn shape_ratio(&self, id: usize) -> Result<f64> {
        let p = self.element_points(id)?;
        let perim = p[0].dist(p[1]) + p[1].dist(p[2]) + p[2].dist(p[0]);
        let rho = 4.0 * self.area(id)? / perim;
        Ok(self.diameter(id)? / rho)
    }

    pub fn max_shape_ratio(&self) -> f64 {
        (0..self.elements.len())
            .map(|i| self.shape_ratio(i).unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max)
    }

    pub fn min_diameter(&self) -> f64 {
        (0..self.elements.len())
            .map(|i| self.diameter(i).unwrap_or(f64::INFINITY))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_diameter(&self) -> f64 {
        (0..self.elements.len())
            .map(|i| self.diameter(i).unwrap_or(0.0))
            .fold(0.0, f64::max)
    }

    /// Local index (0..3) of the longest face; face `i` is opposite vertex `i`.
    /// Ties go to the face with the lexicographically smallest
    /// `(min id, max id)` pair.
    pub fn longest_edge(&self, id: usize) -> Result<usize> {
        let e = self.element(id)?;
        Ok(longest_face(&e.vertices, |v| self.position(v)))
    }

    /// Layer `generation - refinement_count`.
    pub fn layer_of(&self, id: usize) -> Result<i64> {
        let e = self.element(id)?;
        Ok(self.generation as i64 - e.refinement_count as i64)
    }

    /// Whether a face lies on the boundary of the domain triangle.
    pub fn is_boundary_face(&self, key: FaceKey) -> bool {
        let (a, b) = (self.dyadic[key.0], self.dyadic[key.1]);
        (0..3).any(|i| a.on_root_edge(i) && b.on_root_edge(i))
    }

    /// Conformity check: every boundary face has one incident element, every
    /// interior face two, and no face carries a vertex at its midpoint.
    pub fn check_conforming(&self) -> Result<()> {
        let lookup: HashMap<Dyadic, usize> =
            self.dyadic.iter().enumerate().map(|(i, d)| (*d, i)).collect();
        for (&key, incident) in &self.faces {
            let expected = if self.is_boundary_face(key) { 1 } else { 2 };
            if incident.len() != expected {
                return Err(Error::Conformity(format!(
                    "face {key:?} is shared by {} elements, expected {expected}",
                    incident.len()
                )));
            }
            if let Some(mid) = self.dyadic[key.0].midpoint(self.dyadic[key.1]) {
                if let Some(v) = lookup.get(&mid) {
                    return Err(Error::Conformity(format!(
                        "hanging vertex {v} on face {key:?}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Bisects every marked element at the midpoint of its longest edge, then
    /// bisects elements carrying hanging vertices until the mesh is
    /// conforming again. The result has generation `n + 1`.
    pub fn refine_marked(&self, marked: &BTreeSet<usize>) -> Result<Self> {
        if let Some(&bad) = marked.iter().find(|&&id| id >= self.elements.len()) {
            return Err(Error::UnknownElement(bad));
        }
        let mut tree = RefineTree {
            domain: self.domain,
            dyadic: self.dyadic.clone(),
            lookup: self.dyadic.iter().enumerate().map(|(i, d)| (*d, i)).collect(),
            nodes: self
                .elements
                .iter()
                .map(|e| TreeNode {
                    vertices: e.vertices,
                    refinement_count: e.refinement_count,
                    children: None,
                })
                .collect(),
        };
        for &id in marked {
            tree.bisect(id)?;
        }
        loop {
            let mut changed = false;
            let count = tree.nodes.len();
            for idx in 0..count {
                if tree.nodes[idx].children.is_none() && tree.has_hanging_vertex(idx) {
                    tree.bisect(idx)?;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let mut elements = Vec::with_capacity(tree.nodes.len());
        for root in 0..self.elements.len() {
            let mut stack = vec![root];
            while let Some(idx) = stack.pop() {
                match tree.nodes[idx].children {
                    Some([a, b]) => {
                        stack.push(b);
                        stack.push(a);
                    }
                    None => elements.push(Element {
                        id: elements.len(),
                        vertices: tree.nodes[idx].vertices,
                        refinement_count: tree.nodes[idx].refinement_count,
                        parent: Some(root),
                    }),
                }
            }
        }
        Ok(Self::assemble(
            self.domain,
            tree.dyadic,
            elements,
            self.generation + 1,
        ))
    }

    /// Element whose closed triangle contains `k`; ties go to the smallest id.
    pub fn locate(&self, k: WaveVector) -> Result<usize> {
        const TOL: f64 = 1e-12;
        if !k.is_finite() || barycentric(&self.domain, k).iter().any(|&l| l < -TOL) {
            return Err(Error::OutOfDomain(k));
        }
        let index = self.index.get_or_init(|| LocateIndex::build(self));
        let contains = |id: usize| {
            let p = self.elements[id].vertices.map(|v| self.position(v));
            barycentric(&p, k).iter().all(|&l| l >= -TOL)
        };
        if let Some(id) = index.candidates(k).iter().copied().find(|&id| contains(id)) {
            return Ok(id);
        }
        // Rounding at the domain boundary: fall back to the best candidate.
        let score = |id: usize| {
            let p = self.elements[id].vertices.map(|v| self.position(v));
            barycentric(&p, k).into_iter().fold(f64::INFINITY, f64::min)
        };
        (0..self.elements.len())
            .max_by(|&a, &b| score(a).total_cmp(&score(b)).then(b.cmp(&a)))
            .ok_or(Error::OutOfDomain(k))
    }

    /// Plain-text dump: `nv ne generation`, then `id x y` per vertex, then
    /// `id v1 v2 v3 refinementCount parentId` per element (`-1` for none).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} {} {}",
            self.vertices.len(),
            self.elements.len(),
            self.generation
        );
        for v in &self.vertices {
            let _ = writeln!(s, "{} {:.17e} {:.17e}", v.id, v.position.k1, v.position.k2);
        }
        for e in &self.elements {
            let parent = e.parent.map_or(-1, |p| p as i64);
            let _ = writeln!(
                s,
                "{} {} {} {} {} {}",
                e.id, e.vertices[0], e.vertices[1], e.vertices[2], e.refinement_count, parent
            );
        }
        s
    }

    /// Parses [`ParamMesh::to_text`] output. The domain triangle is recovered
    /// from the vertex hull; dyadic coordinates are snapped to a 2^-44 grid.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        Self::parse_lines(&mut lines)
    }

    pub(crate) fn parse_lines<'a>(
        lines: &mut impl Iterator<Item = (usize, &'a str)>,
    ) -> Result<Self> {
        let (ln, header) = lines.next().ok_or(Error::Parse {
            line: 0,
            msg: "empty mesh text".into(),
        })?;
        let h: Vec<u64> = parse_fields(ln, header)?;
        if h.len() != 3 {
            return Err(Error::Parse {
                line: ln + 1,
                msg: "header must be `nv ne generation`".into(),
            });
        }
        let (nv, ne, generation) = (h[0] as usize, h[1] as usize, h[2] as u32);
        let mut positions = Vec::with_capacity(nv);
        for i in 0..nv {
            let (ln, l) = lines.next().ok_or(Error::Parse {
                line: 0,
                msg: "truncated vertex block".into(),
            })?;
            let f: Vec<f64> = parse_fields(ln, l)?;
            if f.len() != 3 || f[0] as usize != i {
                return Err(Error::Parse {
                    line: ln + 1,
                    msg: "expected `id x y` with dense ids".into(),
                });
            }
            positions.push(WaveVector::new(f[1], f[2]));
        }
        let mut elements = Vec::with_capacity(ne);
        for i in 0..ne {
            let (ln, l) = lines.next().ok_or(Error::Parse {
                line: 0,
                msg: "truncated element block".into(),
            })?;
            let f: Vec<i64> = parse_fields(ln, l)?;
            if f.len() != 6 || f[0] as usize != i {
                return Err(Error::Parse {
                    line: ln + 1,
                    msg: "expected `id v1 v2 v3 refinementCount parentId`".into(),
                });
            }
            let verts = [f[1] as usize, f[2] as usize, f[3] as usize];
            if verts.iter().any(|&v| v >= nv) {
                return Err(Error::Parse {
                    line: ln + 1,
                    msg: "vertex id out of range".into(),
                });
            }
            elements.push(Element {
                id: i,
                vertices: verts,
                refinement_count: f[4] as u32,
                parent: (f[5] >= 0).then_some(f[5] as usize),
            });
        }
        let domain = hull_triangle(&positions)?;
        const SNAP: u32 = 16;
        let dyadic = positions
            .iter()
            .map(|&p| {
                let l = barycentric(&domain, p);
                let snap = |x: f64| {
                    let q = (x.clamp(0.0, 1.0) * (1u64 << (DYADIC_BITS - SNAP)) as f64).round();
                    (q as u64) << SNAP
                };
                Dyadic(snap(l[1]), snap(l[2]))
            })
            .collect();
        let mut mesh = Self::assemble(domain, dyadic, elements, generation);
        // Keep the parsed positions rather than the snapped reconstruction.
        for (v, p) in mesh.vertices.iter_mut().zip(positions) {
            v.position = p;
        }
        Ok(mesh)
    }

    /// SVG drawing of the mesh; elements in `highlight` are filled.
    pub fn to_svg(&self, highlight: &BTreeSet<usize>) -> String {
        let frame = SvgFrame::new(&self.domain, 800.0);
        let mut s = frame.header();
        for e in &self.elements {
            let pts: Vec<String> = e
                .vertices
                .iter()
                .map(|&v| {
                    let (x, y) = frame.map(self.position(v));
                    format!("{x:.3},{y:.3}")
                })
                .collect();
            let fill = if highlight.contains(&e.id) {
                "#f4a261"
            } else {
                "none"
            };
            let _ = writeln!(
                s,
                r#"<polygon points="{}" fill="{fill}" stroke="black" stroke-width="0.5"/>"#,
                pts.join(" ")
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn parse_fields<T: std::str::FromStr>(ln: usize, line: &str) -> Result<Vec<T>> {
    line.split_whitespace()
        .map(|t| {
            t.parse::<T>().map_err(|_| Error::Parse {
                line: ln + 1,
                msg: format!("bad field `{t}`"),
            })
        })
        .collect()
}

fn dyadic_position(domain: &[WaveVector; 3], d: Dyadic) -> WaveVector {
    let l2 = d.0 as f64 / DYADIC_ONE as f64;
    let l3 = d.1 as f64 / DYADIC_ONE as f64;
    let l1 = d.first() as f64 / DYADIC_ONE as f64;
    WaveVector::new(
        l1 * domain[0].k1 + l2 * domain[1].k1 + l3 * domain[2].k1,
        l1 * domain[0].k2 + l2 * domain[1].k2 + l3 * domain[2].k2,
    )
}

/// Corners of the triangle spanned by a point cloud, counterclockwise.
fn hull_triangle(points: &[WaveVector]) -> Result<[WaveVector; 3]> {
    let first = points
        .iter()
        .copied()
        .min_by(|a, b| a.k1.total_cmp(&b.k1).then(a.k2.total_cmp(&b.k2)))
        .ok_or_else(|| Error::InvalidInput("no vertices".into()))?;
    let second = points
        .iter()
        .copied()
        .max_by(|a, b| a.dist(first).total_cmp(&b.dist(first)))
        .unwrap_or(first);
    let third = points
        .iter()
        .copied()
        .max_by(|a, b| {
            signed_area2(first, second, *a)
                .abs()
                .total_cmp(&signed_area2(first, second, *b).abs())
        })
        .unwrap_or(first);
    let area2 = signed_area2(first, second, third);
    if area2.abs() < 1e-300 {
        return Err(Error::DegenerateTriangle(area2 / 2.0));
    }
    Ok(if area2 > 0.0 {
        [first, second, third]
    } else {
        [first, third, second]
    })
}

fn longest_face(vertices: &[usize; 3], pos: impl Fn(usize) -> WaveVector) -> usize {
    let len = |f: usize| pos(vertices[(f + 1) % 3]).dist(pos(vertices[(f + 2) % 3]));
    let lens = [len(0), len(1), len(2)];
    let max = lens.iter().copied().fold(0.0, f64::max);
    (0..3)
        .filter(|&f| lens[f] >= max * (1.0 - 1e-12))
        .min_by_key(|&f| face_key(vertices[(f + 1) % 3], vertices[(f + 2) % 3]))
        .unwrap_or(0)
}

struct TreeNode {
    vertices: [usize; 3],
    refinement_count: u32,
    children: Option<[usize; 2]>,
}

struct RefineTree {
    domain: [WaveVector; 3],
    dyadic: Vec<Dyadic>,
    lookup: HashMap<Dyadic, usize>,
    nodes: Vec<TreeNode>,
}

impl RefineTree {
    fn pos(&self, v: usize) -> WaveVector {
        dyadic_position(&self.domain, self.dyadic[v])
    }

    fn midpoint(&self, a: usize, b: usize) -> Result<Dyadic> {
        self.dyadic[a]
            .midpoint(self.dyadic[b])
            .ok_or_else(|| Error::InvalidInput("bisection depth exceeds dyadic precision".into()))
    }

    fn has_hanging_vertex(&self, idx: usize) -> bool {
        let v = self.nodes[idx].vertices;
        (0..3).any(|f| {
            self.midpoint(v[(f + 1) % 3], v[(f + 2) % 3])
                .map(|m| self.lookup.contains_key(&m))
                .unwrap_or(false)
        })
    }

    fn bisect(&mut self, idx: usize) -> Result<()> {
        let node = &self.nodes[idx];
        if node.children.is_some() {
            return Ok(());
        }
        let v = node.vertices;
        let rc = node.refinement_count + 1;
        let f = longest_face(&v, |i| self.pos(i));
        let (apex, e1, e2) = (v[f], v[(f + 1) % 3], v[(f + 2) % 3]);
        let mid = self.midpoint(e1, e2)?;
        let m = match self.lookup.get(&mid) {
            Some(&m) => m,
            None => {
                let m = self.dyadic.len();
                self.dyadic.push(mid);
                self.lookup.insert(mid, m);
                m
            }
        };
        let first = self.nodes.len();
        self.nodes.push(TreeNode {
            vertices: [apex, e1, m],
            refinement_count: rc,
            children: None,
        });
        self.nodes.push(TreeNode {
            vertices: [apex, m, e2],
            refinement_count: rc,
            children: None,
        });
        self.nodes[idx].children = Some([first, first + 1]);
        Ok(())
    }
}

/// Uniform bucket grid over the domain's bounding box.
#[derive(Clone, Debug)]
struct LocateIndex {
    origin: WaveVector,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl LocateIndex {
    fn build(mesh: &ParamMesh) -> Self {
        let d = &mesh.domain;
        let min = WaveVector::new(
            d.iter().map(|p| p.k1).fold(f64::INFINITY, f64::min),
            d.iter().map(|p| p.k2).fold(f64::INFINITY, f64::min),
        );
        let max = WaveVector::new(
            d.iter().map(|p| p.k1).fold(f64::NEG_INFINITY, f64::max),
            d.iter().map(|p| p.k2).fold(f64::NEG_INFINITY, f64::max),
        );
        let side = ((mesh.elements.len() as f64).sqrt().ceil() as usize).clamp(1, 512);
        let cell = ((max.k1 - min.k1).max(max.k2 - min.k2) / side as f64).max(1e-300);
        let nx = (((max.k1 - min.k1) / cell).ceil() as usize).max(1);
        let ny = (((max.k2 - min.k2) / cell).ceil() as usize).max(1);
        let mut index = Self {
            origin: min,
            cell,
            nx,
            ny,
            buckets: vec![Vec::new(); nx * ny],
        };
        for e in &mesh.elements {
            let p = e.vertices.map(|v| mesh.position(v));
            let pad = 1e-9 * cell;
            let lo = index.cell_of(WaveVector::new(
                p.iter().map(|q| q.k1).fold(f64::INFINITY, f64::min) - pad,
                p.iter().map(|q| q.k2).fold(f64::INFINITY, f64::min) - pad,
            ));
            let hi = index.cell_of(WaveVector::new(
                p.iter().map(|q| q.k1).fold(f64::NEG_INFINITY, f64::max) + pad,
                p.iter().map(|q| q.k2).fold(f64::NEG_INFINITY, f64::max) + pad,
            ));
            for j in lo.1..=hi.1 {
                for i in lo.0..=hi.0 {
                    index.buckets[j * nx + i].push(e.id);
                }
            }
        }
        index
    }

    fn cell_of(&self, p: WaveVector) -> (usize, usize) {
        let i = ((p.k1 - self.origin.k1) / self.cell).floor();
        let j = ((p.k2 - self.origin.k2) / self.cell).floor();
        (
            (i.max(0.0) as usize).min(self.nx - 1),
            (j.max(0.0) as usize).min(self.ny - 1),
        )
    }

    fn candidates(&self, p: WaveVector) -> &[usize] {
        let (i, j) = self.cell_of(p);
        &self.buckets[j * self.nx + i]
    }
}

/// Maps parameter-space coordinates onto an SVG canvas.
pub struct SvgFrame {
    min: WaveVector,
    scale: f64,
    width: f64,
    height: f64,
    margin: f64,
}

impl SvgFrame {
    pub fn new(domain: &[WaveVector; 3], size: f64) -> Self {
        let min = WaveVector::new(
            domain.iter().map(|p| p.k1).fold(f64::INFINITY, f64::min),
            domain.iter().map(|p| p.k2).fold(f64::INFINITY, f64::min),
        );
        let max = WaveVector::new(
            domain.iter().map(|p| p.k1).fold(f64::NEG_INFINITY, f64::max),
            domain.iter().map(|p| p.k2).fold(f64::NEG_INFINITY, f64::max),
        );
        let span = (max.k1 - min.k1).max(max.k2 - min.k2).max(1e-300);
        let scale = size / span;
        Self {
            min,
            scale,
            width: (max.k1 - min.k1) * scale,
            height: (max.k2 - min.k2) * scale,
            margin: 10.0,
        }
    }

    pub fn map(&self, p: WaveVector) -> (f64, f64) {
        (
            self.margin + (p.k1 - self.min.k1) * self.scale,
            self.margin + self.height - (p.k2 - self.min.k2) * self.scale,
        )
    }

    pub fn header(&self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{:.0}\">\n",
            self.width + 2.0 * self.margin,
            self.height + 2.0 * self.margin
        )
    }
}
