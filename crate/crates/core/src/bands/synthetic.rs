//! Closed-form band models: eigenvalues of small symmetric matrices whose
//! entries depend smoothly on k, with exactly known crossing sets.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{BandProvider, BandSample, SingularSet};
use crate::error::{Error, Result};
use crate::mesh::WaveVector;

/// k ↦ symmetric matrix, with its partial derivatives.
pub trait MatrixFamily: Send + Sync {
    fn size(&self) -> usize;
    fn matrix(&self, k: WaveVector) -> DMatrix<f64>;
    fn derivatives(&self, k: WaveVector) -> [DMatrix<f64>; 2];
    fn singular_set(&self) -> SingularSet;
}

/// Provider built from a matrix family. Eigenvalues are sorted ascending;
/// gradients use ∇λ = vᵀ (∂M) v and ∇ω = ∇λ / 2ω.
pub struct SyntheticBands {
    family: Box<dyn MatrixFamily>,
}

impl std::fmt::Debug for SyntheticBands {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SyntheticBands")
            .field("size", &self.family.size())
            .finish()
    }
}

impl SyntheticBands {
    pub fn new(family: Box<dyn MatrixFamily>) -> Self {
        Self { family }
    }

    /// Sorted eigenpairs. Decoupled blocks are solved separately: 1×1 and
    /// 2×2 blocks in closed form, larger ones with a symmetric eigensolver.
    pub fn eigenpairs(&self, k: WaveVector) -> Result<(Vec<f64>, Vec<DVector<f64>>)> {
        let m = self.family.matrix(k);
        let n = m.nrows();
        let scale = m.amax().max(1.0);
        for i in 0..n {
            for j in 0..i {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidInput(format!(
                        "matrix family is not symmetric at {k:?}"
                    )));
                }
            }
        }
        let mut pairs: Vec<(f64, DVector<f64>)> = Vec::with_capacity(n);
        for block in components(&m) {
            let embed = |local: &[f64]| {
                let mut v = DVector::zeros(n);
                for (&g, &x) in block.iter().zip(local) {
                    v[g] = x;
                }
                v
            };
            match block.len() {
                1 => pairs.push((m[(block[0], block[0])], embed(&[1.0]))),
                2 => {
                    let (i, j) = (block[0], block[1]);
                    let (a, b, d) = (m[(i, i)], m[(i, j)], m[(j, j)]);
                    let mean = (a + d) / 2.0;
                    let r = ((a - d) / 2.0).hypot(b);
                    let theta = 0.5 * (2.0 * b).atan2(a - d);
                    let (c, s) = (theta.cos(), theta.sin());
                    pairs.push((mean - r, embed(&[-s, c])));
                    pairs.push((mean + r, embed(&[c, s])));
                }
                _ => {
                    let sub = DMatrix::from_fn(block.len(), block.len(), |a, b| {
                        m[(block[a], block[b])]
                    });
                    let eig = SymmetricEigen::new(sub);
                    for q in 0..block.len() {
                        let v = eig.eigenvectors.column(q);
                        pairs.push((eig.eigenvalues[q], embed(v.as_slice())));
                    }
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (values, vectors) = pairs.into_iter().unzip();
        Ok((values, vectors))
    }
}

/// Connected components of the off-diagonal sparsity pattern.
fn components(m: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let n = m.nrows();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut comp = vec![start];
        seen[start] = true;
        let mut head = 0;
        while head < comp.len() {
            let i = comp[head];
            head += 1;
            for j in 0..n {
                if !seen[j] && (m[(i, j)] != 0.0 || m[(j, i)] != 0.0) {
                    seen[j] = true;
                    comp.push(j);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

impl BandProvider for SyntheticBands {
    fn num_bands(&self) -> usize {
        self.family.size()
    }

    fn eigenvalues(&self, k: WaveVector) -> Result<Vec<f64>> {
        let (values, _) = self.eigenpairs(k)?;
        check_nonnegative(k, values)
    }

    fn sample(&self, k: WaveVector) -> Result<BandSample> {
        let (values, vectors) = self.eigenpairs(k)?;
        let values = check_nonnegative(k, values)?;
        let singular = self.family.singular_set().contains(k, 1e-12);
        let d = self.family.derivatives(k);
        let n = values.len();
        let grads = (0..n)
            .map(|q| {
                let tol = 1e-12 * values[q].abs().max(1.0);
                let degenerate = (q > 0 && values[q] - values[q - 1] <= tol)
                    || (q + 1 < n && values[q + 1] - values[q] <= tol);
                let omega = values[q].sqrt();
                if singular || degenerate || omega == 0.0 {
                    return None;
                }
                let v = &vectors[q];
                let dl = [v.dot(&(&d[0] * v)), v.dot(&(&d[1] * v))];
                Some([dl[0] / (2.0 * omega), dl[1] / (2.0 * omega)])
            })
            .collect();
        Ok(BandSample::from_lambda(values, grads))
    }

    fn singular_set(&self) -> SingularSet {
        self.family.singular_set()
    }
}

fn check_nonnegative(k: WaveVector, mut values: Vec<f64>) -> Result<Vec<f64>> {
    for v in values.iter_mut() {
        if *v < -1e-12 {
            return Err(Error::Provider {
                k,
                msg: format!("negative eigenvalue {v}"),
            });
        }
        *v = v.max(0.0);
    }
    Ok(values)
}

fn default_one() -> f64 {
    1.0
}

fn default_cone_shift() -> f64 {
    5.0
}

fn default_cone_apex() -> WaveVector {
    WaveVector::new(2.0, 1.0)
}

fn default_line_points() -> [WaveVector; 2] {
    // Mirror images across the line k1 + 0.6 k2 = 2.3, three units away.
    let q = WaveVector::new(2.0, 0.5);
    let n = WaveVector::new(1.0, 0.6);
    let n = n * (1.0 / n.norm());
    [q + n * 3.0, q - n * 3.0]
}

/// Built-in synthetic models. Models with two crossing bands get further
/// well-separated bands ω = 20 + 5e + k1/10 (e = 0, 1, ...) up to the
/// requested count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase")]
pub enum SyntheticModel {
    /// [[c + k1, δ], [δ, c + k2]]; crosses on k1 = k2 when δ = 0.
    #[serde(rename_all = "camelCase")]
    LinearPair {
        #[serde(default = "default_one")]
        shift: f64,
        #[serde(default)]
        coupling: f64,
    },
    /// [[c + a, b], [b, c - a]] with (a, b) = k - apex: λ = c ∓ |k - apex|.
    #[serde(rename_all = "camelCase")]
    Conical {
        #[serde(default = "default_one")]
        shift: f64,
        #[serde(default)]
        apex: WaveVector,
    },
    /// diag((c + |k - p1|)², (c + |k - p2|)²): ω has unit slope and the two
    /// lowest bands cross on the bisector of p1 and p2.
    #[serde(rename_all = "camelCase")]
    CrossingLine {
        #[serde(default = "default_one")]
        shift: f64,
        #[serde(default = "default_line_points")]
        points: [WaveVector; 2],
    },
    /// Square of the conical matrix: ω = c ∓ |k - apex|, unit slope, one
    /// crossing point.
    #[serde(rename_all = "camelCase")]
    CrossingPoint {
        #[serde(default = "default_cone_shift")]
        shift: f64,
        #[serde(default = "default_cone_apex")]
        apex: WaveVector,
    },
    /// Separated analytic bands ω_q = q + 1 + sin(k1 + q) cos(k2 - q/2) / 4.
    Smooth,
    /// diag(offsets[q] + slopes[q] · k).
    #[serde(rename_all = "camelCase")]
    Affine {
        offsets: Vec<f64>,
        slopes: Vec<[f64; 2]>,
    },
}

impl SyntheticModel {
    pub fn crossing_line() -> Self {
        SyntheticModel::CrossingLine {
            shift: 1.0,
            points: default_line_points(),
        }
    }

    pub fn crossing_point() -> Self {
        SyntheticModel::CrossingPoint {
            shift: default_cone_shift(),
            apex: default_cone_apex(),
        }
    }

    pub fn build(&self, bands: usize) -> Result<SyntheticBands> {
        let core = match self {
            SyntheticModel::Smooth => 1,
            SyntheticModel::Affine { offsets, slopes } => {
                if offsets.len() != slopes.len() || offsets.len() != bands {
                    return Err(Error::InvalidInput(
                        "affine model needs one offset and slope per band".into(),
                    ));
                }
                bands
            }
            _ => 2,
        };
        if bands < core.max(1) {
            return Err(Error::InvalidInput(format!(
                "model needs at least {core} bands"
            )));
        }
        if let SyntheticModel::CrossingLine { points, .. } = self {
            if points[0].dist(points[1]) == 0.0 {
                return Err(Error::InvalidInput("crossing line points coincide".into()));
            }
        }
        Ok(SyntheticBands::new(Box::new(Family {
            model: self.clone(),
            bands,
        })))
    }
}

struct Family {
    model: SyntheticModel,
    bands: usize,
}

fn far_omega(e: usize, k: WaveVector) -> (f64, [f64; 2]) {
    (20.0 + 5.0 * e as f64 + 0.1 * k.k1, [0.1, 0.0])
}

fn smooth_omega(q: usize, k: WaveVector) -> (f64, [f64; 2]) {
    let qf = q as f64;
    let (s, c) = ((k.k1 + qf).sin(), (k.k2 - qf / 2.0).cos());
    let w = qf + 1.0 + s * c / 4.0;
    let g = [
        (k.k1 + qf).cos() * c / 4.0,
        -s * (k.k2 - qf / 2.0).sin() / 4.0,
    ];
    (w, g)
}

impl Family {
    fn core_size(&self) -> usize {
        match &self.model {
            SyntheticModel::Smooth | SyntheticModel::Affine { .. } => self.bands,
            _ => 2,
        }
    }

    /// Bands from this index on are diagonal entries ω².
    fn first_omega_band(&self) -> usize {
        match self.model {
            SyntheticModel::Affine { .. } => self.bands,
            SyntheticModel::Smooth => 0,
            _ => 2,
        }
    }

    /// Diagonal entry for bands described directly by ω.
    fn omega_band(&self, q: usize, k: WaveVector) -> (f64, [f64; 2]) {
        match &self.model {
            SyntheticModel::Smooth => smooth_omega(q, k),
            _ => far_omega(q - self.core_size(), k),
        }
    }
}

impl MatrixFamily for Family {
    fn size(&self) -> usize {
        self.bands
    }

    fn matrix(&self, k: WaveVector) -> DMatrix<f64> {
        let n = self.bands;
        let mut m = DMatrix::zeros(n, n);
        match &self.model {
            SyntheticModel::LinearPair { shift, coupling } => {
                m[(0, 0)] = shift + k.k1;
                m[(1, 1)] = shift + k.k2;
                m[(0, 1)] = *coupling;
                m[(1, 0)] = *coupling;
            }
            SyntheticModel::Conical { shift, apex } => {
                let d = k - *apex;
                m[(0, 0)] = shift + d.k1;
                m[(1, 1)] = shift - d.k1;
                m[(0, 1)] = d.k2;
                m[(1, 0)] = d.k2;
            }
            SyntheticModel::CrossingLine { shift, points } => {
                m[(0, 0)] = (shift + k.dist(points[0])).powi(2);
                m[(1, 1)] = (shift + k.dist(points[1])).powi(2);
            }
            SyntheticModel::CrossingPoint { shift, apex } => {
                let d = k - *apex;
                let (a, b, c) = (d.k1, d.k2, *shift);
                m[(0, 0)] = (c + a).powi(2) + b * b;
                m[(1, 1)] = (c - a).powi(2) + b * b;
                m[(0, 1)] = 2.0 * c * b;
                m[(1, 0)] = 2.0 * c * b;
            }
            SyntheticModel::Affine { offsets, slopes } => {
                for q in 0..n {
                    m[(q, q)] = offsets[q] + slopes[q][0] * k.k1 + slopes[q][1] * k.k2;
                }
            }
            SyntheticModel::Smooth => {}
        }
        for q in self.first_omega_band()..n {
            let (w, _) = self.omega_band(q, k);
            m[(q, q)] = w * w;
        }
        m
    }

    fn derivatives(&self, k: WaveVector) -> [DMatrix<f64>; 2] {
        let n = self.bands;
        let mut d = [DMatrix::zeros(n, n), DMatrix::zeros(n, n)];
        match &self.model {
            SyntheticModel::LinearPair { .. } => {
                d[0][(0, 0)] = 1.0;
                d[1][(1, 1)] = 1.0;
            }
            SyntheticModel::Conical { .. } => {
                d[0][(0, 0)] = 1.0;
                d[0][(1, 1)] = -1.0;
                d[1][(0, 1)] = 1.0;
                d[1][(1, 0)] = 1.0;
            }
            SyntheticModel::CrossingLine { shift, points } => {
                for q in 0..2 {
                    let r = k - points[q];
                    let dist = r.norm();
                    let f = 2.0 * (shift + dist) / dist;
                    d[0][(q, q)] = f * r.k1;
                    d[1][(q, q)] = f * r.k2;
                }
            }
            SyntheticModel::CrossingPoint { shift, apex } => {
                let r = k - *apex;
                let (a, b, c) = (r.k1, r.k2, *shift);
                d[0][(0, 0)] = 2.0 * (c + a);
                d[0][(1, 1)] = -2.0 * (c - a);
                d[1][(0, 0)] = 2.0 * b;
                d[1][(1, 1)] = 2.0 * b;
                d[1][(0, 1)] = 2.0 * c;
                d[1][(1, 0)] = 2.0 * c;
            }
            SyntheticModel::Affine { slopes, .. } => {
                for q in 0..n {
                    d[0][(q, q)] = slopes[q][0];
                    d[1][(q, q)] = slopes[q][1];
                }
            }
            SyntheticModel::Smooth => {}
        }
        for q in self.first_omega_band()..n {
            let (w, g) = self.omega_band(q, k);
            d[0][(q, q)] = 2.0 * w * g[0];
            d[1][(q, q)] = 2.0 * w * g[1];
        }
        d
    }

    fn singular_set(&self) -> SingularSet {
        match &self.model {
            SyntheticModel::LinearPair { coupling, .. } if *coupling == 0.0 => SingularSet {
                points: vec![],
                lines: vec![(WaveVector::new(0.0, 0.0), WaveVector::new(1.0, 1.0))],
            },
            SyntheticModel::Conical { apex, .. } | SyntheticModel::CrossingPoint { apex, .. } => {
                SingularSet {
                    points: vec![*apex],
                    lines: vec![],
                }
            }
            SyntheticModel::CrossingLine { points, .. } => {
                let mid = (points[0] + points[1]) * 0.5;
                let d = points[1] - points[0];
                SingularSet {
                    points: vec![],
                    lines: vec![(mid, WaveVector::new(-d.k2, d.k1))],
                }
            }
            _ => SingularSet::default(),
        }
    }
}
