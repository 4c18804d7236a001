//! Local interpolation on the reference triangle and its element-wise
//! global assembly.
//!
//! Local node order for a signature: the three vertices, then for each face
//! the interior Gauss-Lobatto nodes of that face's degree (ascending in the
//! face parameter), then the interior node set of the element degree.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector, LU};
use rayon::prelude::*;

use crate::adapt::ConformingDegrees;
use crate::bands::BandProvider;
use crate::error::{Error, Result};
use crate::fekete::{gauss_lobatto, interior_nodes};
use crate::mesh::{face_key, FaceKey, ParamMesh, WaveVector};
use crate::refbasis::{
    internal_basis, internal_dim, nodal, nodal_gradient, side, side_gradient, DegreeSignature,
    RefPoint, ShapeFn,
};
use crate::MAX_DEGREE;

type Lu = LU<f64, nalgebra::Dyn, nalgebra::Dyn>;

struct FaceTable {
    /// Interior Gauss-Lobatto nodes.
    nodes: Vec<f64>,
    /// Collocation matrix S_kj = (1 - t_k^2)/4 * t_k^(j-2), j = 2..=m.
    lu: Option<Lu>,
}

struct InteriorTable {
    points: Vec<RefPoint>,
    basis: Vec<ShapeFn>,
    lu: Lu,
}

fn face_table(m: usize) -> Result<&'static FaceTable> {
    static SLOTS: [OnceLock<std::result::Result<FaceTable, String>>; MAX_DEGREE + 1] =
        [const { OnceLock::new() }; MAX_DEGREE + 1];
    if m == 0 || m > MAX_DEGREE {
        return Err(Error::InvalidInput(format!("face degree {m} out of range")));
    }
    SLOTS[m]
        .get_or_init(|| {
            let gl = gauss_lobatto(m).map_err(|e| e.to_string())?;
            let nodes = gl.interior().to_vec();
            let lu = (m >= 2).then(|| {
                DMatrix::from_fn(m - 1, m - 1, |k, j| {
                    let t = nodes[k];
                    (1.0 - t * t) / 4.0 * t.powi(j as i32)
                })
                .lu()
            });
            Ok(FaceTable { nodes, lu })
        })
        .as_ref()
        .map_err(|e| Error::Singular(e.clone()))
}

fn interior_table(m: usize) -> Result<&'static InteriorTable> {
    static SLOTS: [OnceLock<std::result::Result<InteriorTable, String>>; MAX_DEGREE + 1] =
        [const { OnceLock::new() }; MAX_DEGREE + 1];
    if !(3..=MAX_DEGREE).contains(&m) {
        return Err(Error::EmptySpace(format!("no internal space for degree {m}")));
    }
    SLOTS[m]
        .get_or_init(|| {
            let set = interior_nodes(m).map_err(|e| e.to_string())?;
            let points = set.points();
            let basis = internal_basis(m).map_err(|e| e.to_string())?;
            let v = DMatrix::from_fn(points.len(), basis.len(), |i, j| basis[j].eval(points[i]));
            Ok(InteriorTable {
                points,
                basis,
                lu: v.lu(),
            })
        })
        .as_ref()
        .map_err(|e| Error::Singular(e.clone()))
}

/// Interior Gauss-Lobatto parameters of a face of degree `m`.
pub fn face_nodes(m: usize) -> Result<Vec<f64>> {
    Ok(face_table(m)?.nodes.clone())
}

/// Interior nodes of degree `m` (empty below 3).
pub fn interior_points(m: usize) -> Result<Vec<RefPoint>> {
    if m < 3 {
        return Ok(Vec::new());
    }
    Ok(interior_table(m)?.points.clone())
}

/// Local interpolation nodes in the order expected by
/// [`interpolate_values`].
pub fn local_nodes(sig: &DegreeSignature) -> Result<Vec<RefPoint>> {
    let mut pts = RefPoint::VERTICES.to_vec();
    for f in 0..3 {
        for t in face_nodes(sig.faces[f])? {
            pts.push(RefPoint::on_face(f, t));
        }
    }
    pts.extend(interior_points(sig.m)?);
    Ok(pts)
}

/// Result of interpolating along one face: values at the start and end
/// vertices, and the side coefficients of degrees 2..=m.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceInterpolant {
    pub degree: usize,
    pub ends: [f64; 2],
    pub coeffs: Vec<f64>,
}

fn solve_face(m: usize, ends: [f64; 2], values: &[f64]) -> Result<FaceInterpolant> {
    let table = face_table(m)?;
    if values.len() != table.nodes.len() {
        return Err(Error::InvalidInput(format!(
            "face of degree {m} needs {} values, got {}",
            table.nodes.len(),
            values.len()
        )));
    }
    let coeffs = match &table.lu {
        None => Vec::new(),
        Some(lu) => {
            let rhs = DVector::from_iterator(
                values.len(),
                table.nodes.iter().zip(values).map(|(&t, &v)| {
                    v - ends[0] * (1.0 - t) / 2.0 - ends[1] * (1.0 + t) / 2.0
                }),
            );
            lu.solve(&rhs)
                .ok_or_else(|| Error::Singular(format!("face collocation, degree {m}")))?
                .as_slice()
                .to_vec()
        }
    };
    Ok(FaceInterpolant {
        degree: m,
        ends,
        coeffs,
    })
}

/// Gauss-Lobatto interpolation of `f` along face `face` with degree `m`.
pub fn face_interpolate(
    f: impl Fn(RefPoint) -> f64,
    face: usize,
    m: usize,
) -> Result<FaceInterpolant> {
    let ends = [
        f(RefPoint::VERTICES[(face + 1) % 3]),
        f(RefPoint::VERTICES[(face + 2) % 3]),
    ];
    let values: Vec<f64> = face_nodes(m)?
        .into_iter()
        .map(|t| f(RefPoint::on_face(face, t)))
        .collect();
    solve_face(m, ends, &values)
}

/// Element-wise polynomial in the nodal/side/internal basis.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalInterpolant {
    pub signature: DegreeSignature,
    pub nodal: [f64; 3],
    /// Per face, coefficients of side degrees 2..=m_i.
    pub sides: [Vec<f64>; 3],
    pub internal: Vec<f64>,
}

impl LocalInterpolant {
    pub fn zero(signature: DegreeSignature) -> Self {
        Self {
            signature,
            nodal: [0.0; 3],
            sides: signature.faces.map(|m| vec![0.0; m - 1]),
            internal: vec![0.0; internal_dim(signature.m)],
        }
    }

    /// Coefficients in the order of [`DegreeSignature::basis`].
    pub fn coefficients(&self) -> Vec<f64> {
        let mut c = self.nodal.to_vec();
        for s in &self.sides {
            c.extend_from_slice(s);
        }
        c.extend_from_slice(&self.internal);
        c
    }

    pub fn from_coefficients(signature: DegreeSignature, c: &[f64]) -> Result<Self> {
        if c.len() != signature.space_dim() {
            return Err(Error::InvalidInput(format!(
                "{} coefficients for a space of dimension {}",
                c.len(),
                signature.space_dim()
            )));
        }
        let mut it = c.iter().copied();
        let nodal = [0, 1, 2].map(|_| it.next().unwrap_or(0.0));
        let sides = signature.faces.map(|m| it.by_ref().take(m - 1).collect());
        Ok(Self {
            signature,
            nodal,
            sides,
            internal: it.collect(),
        })
    }

    /// External part: nodal and side terms only.
    pub fn eval_external(&self, z: RefPoint) -> f64 {
        let mut v = 0.0;
        for i in 0..3 {
            v += self.nodal[i] * nodal(i, z);
        }
        for (f, s) in self.sides.iter().enumerate() {
            for (k, c) in s.iter().enumerate() {
                v += c * side(f, k + 2, z);
            }
        }
        v
    }

    pub fn eval(&self, z: RefPoint) -> f64 {
        let mut v = self.eval_external(z);
        if !self.internal.is_empty() {
            let w = crate::refbasis::bubble(z);
            let exps = crate::refbasis::internal_exponents(self.signature.m);
            v += w * exps
                .iter()
                .zip(&self.internal)
                .map(|(&(a, b), c)| c * z.x.powi(a as i32) * z.y.powi(b as i32))
                .sum::<f64>();
        }
        v
    }

    pub fn gradient(&self, z: RefPoint) -> [f64; 2] {
        let mut g = [0.0; 2];
        let mut add = |c: f64, d: [f64; 2]| {
            g[0] += c * d[0];
            g[1] += c * d[1];
        };
        for i in 0..3 {
            add(self.nodal[i], nodal_gradient(i));
        }
        for (f, s) in self.sides.iter().enumerate() {
            for (k, &c) in s.iter().enumerate() {
                add(c, side_gradient(f, k + 2, z));
            }
        }
        for (&(a, b), &c) in crate::refbasis::internal_exponents(self.signature.m)
            .iter()
            .zip(&self.internal)
        {
            add(c, crate::refbasis::internal_gradient(a, b, z));
        }
        g
    }
}

/// Assembles the external block from three face interpolants. Face `i` runs
/// from vertex `i+1` to `i+2`; shared vertex values must agree.
pub fn extend(faces: &[FaceInterpolant; 3]) -> Result<LocalInterpolant> {
    let mut nodal = [0.0; 3];
    for v in 0..3 {
        // Vertex v ends face v+1 and starts face v+2.
        let a = faces[(v + 1) % 3].ends[1];
        let b = faces[(v + 2) % 3].ends[0];
        if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
            return Err(Error::Conformity(format!(
                "vertex {v} has face values {a} and {b}"
            )));
        }
        nodal[v] = b;
    }
    let degrees = [faces[0].degree, faces[1].degree, faces[2].degree];
    let m = degrees.iter().copied().max().unwrap_or(2).max(2);
    Ok(LocalInterpolant {
        signature: DegreeSignature::new(m, degrees)?,
        nodal,
        sides: [
            faces[0].coeffs.clone(),
            faces[1].coeffs.clone(),
            faces[2].coeffs.clone(),
        ],
        internal: Vec::new(),
    })
}

/// Coefficients of the internal interpolant of `g` of degree `m`.
pub fn internal_interpolate(g: impl Fn(RefPoint) -> f64, m: usize) -> Result<Vec<f64>> {
    if m < 3 {
        return Ok(Vec::new());
    }
    let table = interior_table(m)?;
    let values: Vec<f64> = table.points.iter().map(|&z| g(z)).collect();
    solve_internal(m, &values)
}

fn solve_internal(m: usize, values: &[f64]) -> Result<Vec<f64>> {
    if m < 3 {
        return Ok(Vec::new());
    }
    let table = interior_table(m)?;
    debug_assert_eq!(table.basis.len(), values.len());
    let rhs = DVector::from_column_slice(values);
    Ok(table
        .lu
        .solve(&rhs)
        .ok_or_else(|| Error::Singular(format!("interior Vandermonde, degree {m}")))?
        .as_slice()
        .to_vec())
}

/// Interpolant from values at [`local_nodes`].
pub fn interpolate_values(sig: &DegreeSignature, values: &[f64]) -> Result<LocalInterpolant> {
    if values.len() != sig.space_dim() {
        return Err(Error::InvalidInput(format!(
            "{} values for a space of dimension {}",
            values.len(),
            sig.space_dim()
        )));
    }
    let mut off = 3;
    let mut faces = Vec::with_capacity(3);
    for f in 0..3 {
        let n = sig.faces[f] - 1;
        let ends = [values[(f + 1) % 3], values[(f + 2) % 3]];
        faces.push(solve_face(sig.faces[f], ends, &values[off..off + n])?);
        off += n;
    }
    let mut local = LocalInterpolant {
        signature: *sig,
        nodal: [values[0], values[1], values[2]],
        sides: [
            std::mem::take(&mut faces[0].coeffs),
            std::mem::take(&mut faces[1].coeffs),
            std::mem::take(&mut faces[2].coeffs),
        ],
        internal: Vec::new(),
    };
    if sig.m >= 3 {
        let pts = &interior_table(sig.m)?.points;
        let residual: Vec<f64> = pts
            .iter()
            .zip(&values[off..])
            .map(|(&z, &v)| v - local.eval_external(z))
            .collect();
        local.internal = solve_internal(sig.m, &residual)?;
    }
    Ok(local)
}

/// Π f = E(Ef) + I(f - E(Ef)).
pub fn local_pi(f: impl Fn(RefPoint) -> f64, sig: &DegreeSignature) -> Result<LocalInterpolant> {
    let values: Vec<f64> = local_nodes(sig)?.into_iter().map(f).collect();
    interpolate_values(sig, &values)
}

/// Affine map M(z) = A z + b from the reference triangle onto an element;
/// the element's vertices sorted by global id go to ẑ_1, ẑ_2, ẑ_3.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineMap {
    pub a: [[f64; 2]; 2],
    pub b: WaveVector,
    inv: [[f64; 2]; 2],
}

impl AffineMap {
    pub fn from_points(p: [WaveVector; 3]) -> Result<Self> {
        let s = crate::refbasis::SQRT3;
        // Columns are dM/dx and dM/dy, from the nodal gradients.
        let dx = (p[1] - p[0]) * 0.5;
        let dy = (p[2] - (p[0] + p[1]) * 0.5) * (1.0 / s);
        let a = [[dx.k1, dy.k1], [dx.k2, dy.k2]];
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let scale = (dx.norm() * dy.norm()).max(f64::MIN_POSITIVE);
        if !(det.abs() > 1e-14 * scale) {
            return Err(Error::DegenerateTriangle(det));
        }
        let inv = [
            [a[1][1] / det, -a[0][1] / det],
            [-a[1][0] / det, a[0][0] / det],
        ];
        Ok(Self {
            a,
            b: (p[0] + p[1]) * 0.5,
            inv,
        })
    }

    /// Sorted vertex ids of an element and the map built from them.
    pub fn for_element(mesh: &ParamMesh, id: usize) -> Result<([usize; 3], Self)> {
        let mut v = mesh.element(id)?.vertices;
        v.sort_unstable();
        Ok((v, Self::from_points(v.map(|i| mesh.position(i)))?))
    }

    pub fn forward(&self, z: RefPoint) -> WaveVector {
        WaveVector::new(
            self.a[0][0] * z.x + self.a[0][1] * z.y + self.b.k1,
            self.a[1][0] * z.x + self.a[1][1] * z.y + self.b.k2,
        )
    }

    pub fn inverse(&self, k: WaveVector) -> RefPoint {
        let d = k - self.b;
        RefPoint::new(
            self.inv[0][0] * d.k1 + self.inv[0][1] * d.k2,
            self.inv[1][0] * d.k1 + self.inv[1][1] * d.k2,
        )
    }

    pub fn det(&self) -> f64 {
        self.a[0][0] * self.a[1][1] - self.a[0][1] * self.a[1][0]
    }

    /// Physical gradient from a reference gradient: A^-T g.
    pub fn push_gradient(&self, g: [f64; 2]) -> [f64; 2] {
        [
            self.inv[0][0] * g[0] + self.inv[1][0] * g[1],
            self.inv[0][1] * g[0] + self.inv[1][1] * g[1],
        ]
    }
}

/// Where each global sample lives, shared by all bands.
#[derive(Clone, Debug)]
pub struct SamplePlan {
    pub points: Vec<WaveVector>,
    face_offset: BTreeMap<FaceKey, (usize, usize)>,
    element_offset: Vec<(usize, usize)>,
    num_vertices: usize,
}

impl SamplePlan {
    pub fn new(mesh: &ParamMesh, degrees: &ConformingDegrees) -> Result<Self> {
        degrees.check(mesh)?;
        let mut points: Vec<WaveVector> = mesh.vertices().iter().map(|v| v.position).collect();
        let mut face_offset = BTreeMap::new();
        for &key in mesh.faces().keys() {
            let m = degrees.face_degree(key)?;
            let (a, b) = (mesh.position(key.0), mesh.position(key.1));
            let start = points.len();
            for t in face_nodes(m)? {
                points.push(a * ((1.0 - t) / 2.0) + b * ((1.0 + t) / 2.0));
            }
            face_offset.insert(key, (start, m - 1));
        }
        let mut element_offset = Vec::with_capacity(mesh.num_elements());
        for e in mesh.elements() {
            let m = degrees.element[e.id];
            let start = points.len();
            let (_, map) = AffineMap::for_element(mesh, e.id)?;
            for z in interior_points(m)? {
                points.push(map.forward(z));
            }
            element_offset.push((start, internal_dim(m)));
        }
        Ok(Self {
            points,
            face_offset,
            element_offset,
            num_vertices: mesh.num_vertices(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Local node values of an element, gathered from global samples.
    fn gather(
        &self,
        sorted: [usize; 3],
        sig: &DegreeSignature,
        element: usize,
        values: &[f64],
    ) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(sig.space_dim());
        out.extend(sorted.iter().map(|&v| values[v]));
        for f in 0..3 {
            let (from, to) = (sorted[(f + 1) % 3], sorted[(f + 2) % 3]);
            let key = face_key(from, to);
            let &(start, n) = self
                .face_offset
                .get(&key)
                .ok_or_else(|| Error::Conformity(format!("face {key:?} missing")))?;
            if n != sig.faces[f] - 1 {
                return Err(Error::Conformity(format!("face {key:?} degree mismatch")));
            }
            let slice = &values[start..start + n];
            if from < to {
                out.extend_from_slice(slice);
            } else {
                out.extend(slice.iter().rev());
            }
        }
        let (start, n) = self.element_offset[element];
        out.extend_from_slice(&values[start..start + n]);
        debug_assert!(self.num_vertices <= values.len());
        Ok(out)
    }
}

/// Evaluates a scalar function at every sample, in parallel. Errors carry
/// the offending wave vector.
pub fn sample_values(
    plan: &SamplePlan,
    f: impl Fn(WaveVector) -> Result<f64> + Sync,
) -> Result<Vec<f64>> {
    plan.points
        .par_iter()
        .map(|&k| f(k).map_err(|e| wrap_provider(k, e)))
        .collect()
}

fn wrap_provider(k: WaveVector, e: Error) -> Error {
    match e {
        Error::Provider { .. } => e,
        other => Error::Provider {
            k,
            msg: other.to_string(),
        },
    }
}

/// Piecewise polynomial, continuous across faces.
#[derive(Debug)]
pub struct GlobalInterpolant {
    mesh: Arc<ParamMesh>,
    locals: Vec<LocalInterpolant>,
    maps: Vec<AffineMap>,
    face_degrees: BTreeMap<FaceKey, usize>,
    /// Zero-based band index, when built from a provider.
    pub band: Option<usize>,
    clamped: AtomicUsize,
}

impl Clone for GlobalInterpolant {
    fn clone(&self) -> Self {
        Self {
            mesh: self.mesh.clone(),
            locals: self.locals.clone(),
            maps: self.maps.clone(),
            face_degrees: self.face_degrees.clone(),
            band: self.band,
            clamped: AtomicUsize::new(self.clamped.load(Ordering::Relaxed)),
        }
    }
}

impl GlobalInterpolant {
    /// Builds the interpolant from values at the plan's samples.
    pub fn from_samples(
        mesh: Arc<ParamMesh>,
        degrees: &ConformingDegrees,
        plan: &SamplePlan,
        values: &[f64],
    ) -> Result<Self> {
        if values.len() != plan.len() {
            return Err(Error::InvalidInput(format!(
                "{} sample values for {} samples",
                values.len(),
                plan.len()
            )));
        }
        let built: Vec<(LocalInterpolant, AffineMap)> = (0..mesh.num_elements())
            .into_par_iter()
            .map(|id| {
                let (sorted, map) = AffineMap::for_element(&mesh, id)?;
                let sig = degrees.signature(&mesh, id)?;
                let local_values = plan.gather(sorted, &sig, id, values)?;
                Ok((interpolate_values(&sig, &local_values)?, map))
            })
            .collect::<Result<_>>()?;
        let (locals, maps) = built.into_iter().unzip();
        Ok(Self {
            mesh,
            locals,
            maps,
            face_degrees: degrees.face.clone(),
            band: None,
            clamped: AtomicUsize::new(0),
        })
    }

    /// Interpolates a scalar function of the wave vector.
    pub fn from_fn(
        mesh: Arc<ParamMesh>,
        degrees: &ConformingDegrees,
        f: impl Fn(WaveVector) -> Result<f64> + Sync,
    ) -> Result<Self> {
        let plan = SamplePlan::new(&mesh, degrees)?;
        let values = sample_values(&plan, f)?;
        Self::from_samples(mesh, degrees, &plan, &values)
    }

    pub fn mesh(&self) -> &Arc<ParamMesh> {
        &self.mesh
    }

    pub fn local(&self, element: usize) -> &LocalInterpolant {
        &self.locals[element]
    }

    pub fn map(&self, element: usize) -> &AffineMap {
        &self.maps[element]
    }

    pub fn face_degrees(&self) -> &BTreeMap<FaceKey, usize> {
        &self.face_degrees
    }

    /// Dimension of the conforming space this interpolant lives in.
    pub fn num_samples(&self) -> usize {
        self.mesh.num_vertices()
            + self.face_degrees.values().map(|m| m - 1).sum::<usize>()
            + self
                .locals
                .iter()
                .map(|l| internal_dim(l.signature.m))
                .sum::<usize>()
    }

    /// Value of the local polynomial of `element` at `k`, without locating.
    pub fn evaluate_in(&self, element: usize, k: WaveVector) -> f64 {
        self.locals[element].eval(self.maps[element].inverse(k))
    }

    pub fn gradient_in(&self, element: usize, k: WaveVector) -> [f64; 2] {
        let g = self.locals[element].gradient(self.maps[element].inverse(k));
        self.maps[element].push_gradient(g)
    }

    pub fn evaluate(&self, k: WaveVector) -> Result<f64> {
        let id = self.mesh.locate(k)?;
        Ok(self.evaluate_in(id, k))
    }

    /// sqrt(max(0, evaluate(k))); negative values are counted.
    pub fn band_value(&self, k: WaveVector) -> Result<f64> {
        let v = self.evaluate(k)?;
        if v < 0.0 {
            self.clamped.fetch_add(1, Ordering::Relaxed);
        }
        Ok(v.max(0.0).sqrt())
    }

    /// Number of negative values clamped by [`GlobalInterpolant::band_value`].
    pub fn clamp_count(&self) -> usize {
        self.clamped.load(Ordering::Relaxed)
    }

    /// Plain-text dump: the mesh, then per element a line
    /// `element id m m1 m2 m3` followed by its coefficients on one line.
    pub fn to_text(&self) -> String {
        let mut s = self.mesh.to_text();
        let _ = writeln!(s, "band {}", self.band.map_or(-1, |b| b as i64));
        for (id, l) in self.locals.iter().enumerate() {
            let sig = l.signature;
            let _ = writeln!(
                s,
                "element {id} {} {} {} {}",
                sig.m, sig.faces[0], sig.faces[1], sig.faces[2]
            );
            let c: Vec<String> = l.coefficients().iter().map(|c| format!("{c:.17e}")).collect();
            let _ = writeln!(s, "{}", c.join(" "));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let mesh = Arc::new(ParamMesh::parse_lines(&mut lines)?);
        let parse_err = |line: usize, msg: &str| Error::Parse {
            line: line + 1,
            msg: msg.into(),
        };
        let (ln, band_line) = lines.next().ok_or_else(|| parse_err(0, "missing band line"))?;
        let band = band_line
            .strip_prefix("band ")
            .and_then(|b| b.trim().parse::<i64>().ok())
            .ok_or_else(|| parse_err(ln, "expected `band j`"))?;
        let mut locals = Vec::with_capacity(mesh.num_elements());
        let mut maps = Vec::with_capacity(mesh.num_elements());
        for id in 0..mesh.num_elements() {
            let (ln, head) = lines
                .next()
                .ok_or_else(|| parse_err(0, "truncated element blocks"))?;
            let f: Vec<&str> = head.split_whitespace().collect();
            if f.len() != 6 || f[0] != "element" || f[1].parse::<usize>().ok() != Some(id) {
                return Err(parse_err(ln, "expected `element id m m1 m2 m3`"));
            }
            let d: Vec<usize> = f[2..]
                .iter()
                .map(|t| t.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| parse_err(ln, "bad degree"))?;
            let sig = DegreeSignature::new(d[0], [d[1], d[2], d[3]])?;
            let (ln, body) = lines
                .next()
                .ok_or_else(|| parse_err(ln, "missing coefficient line"))?;
            let c: Vec<f64> = body
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| parse_err(ln, "bad coefficient"))?;
            locals.push(LocalInterpolant::from_coefficients(sig, &c)?);
            maps.push(AffineMap::for_element(&mesh, id)?.1);
        }
        let mut face_degrees = BTreeMap::new();
        for (id, l) in locals.iter().enumerate() {
            let (sorted, _) = AffineMap::for_element(&mesh, id)?;
            for f in 0..3 {
                let key = face_key(sorted[(f + 1) % 3], sorted[(f + 2) % 3]);
                face_degrees.insert(key, l.signature.faces[f]);
            }
        }
        Ok(Self {
            mesh,
            locals,
            maps,
            face_degrees,
            band: (band >= 0).then_some(band as usize),
            clamped: AtomicUsize::new(0),
        })
    }
}

/// Interpolants of the eigenvalues λ_j for every zero-based band index in
/// `bands`, sharing one provider evaluation per sample point.
pub fn global_interpolate_bands(
    provider: &dyn BandProvider,
    mesh: Arc<ParamMesh>,
    degrees: &ConformingDegrees,
    bands: std::ops::Range<usize>,
) -> Result<Vec<GlobalInterpolant>> {
    if bands.end > provider.num_bands() {
        return Err(Error::InvalidInput(format!(
            "band {} requested from a provider with {} bands",
            bands.end,
            provider.num_bands()
        )));
    }
    let plan = SamplePlan::new(&mesh, degrees)?;
    let rows: Vec<Vec<f64>> = plan
        .points
        .par_iter()
        .map(|&k| provider.eigenvalues(k).map_err(|e| wrap_provider(k, e)))
        .collect::<Result<_>>()?;
    bands
        .map(|j| {
            let values: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            let mut gi = GlobalInterpolant::from_samples(mesh.clone(), degrees, &plan, &values)?;
            gi.band = Some(j);
            Ok(gi)
        })
        .collect()
}

/// Interpolant of λ_j (zero-based `band`).
pub fn global_interpolate(
    provider: &dyn BandProvider,
    mesh: Arc<ParamMesh>,
    degrees: &ConformingDegrees,
    band: usize,
) -> Result<GlobalInterpolant> {
    Ok(global_interpolate_bands(provider, mesh, degrees, band..band + 1)?.remove(0))
}
