//! Interpolation nodes: Gauss-Lobatto points on faces and determinant
//! maximising points for the internal space.

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::refbasis::{internal_basis, internal_dim, RefPoint, ShapeFn};
use crate::MAX_DEGREE;

/// Gauss-Lobatto nodes of degree `m` on [-1, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct GaussLobattoSet {
    pub m: usize,
    /// `m + 1` increasing nodes, endpoints exactly -1 and 1.
    pub nodes: Vec<f64>,
}

impl GaussLobattoSet {
    pub fn interior(&self) -> &[f64] {
        &self.nodes[1..self.m]
    }
}

/// Legendre P_m and its derivative at `x`.
fn legendre(m: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if m == 0 {
        return (1.0, 0.0);
    }
    for n in 1..m {
        let n = n as f64;
        let p2 = ((2.0 * n + 1.0) * x * p1 - n * p0) / (n + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let m = m as f64;
    let dp = m * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

pub fn gauss_lobatto(m: usize) -> Result<GaussLobattoSet> {
    if m < 1 {
        return Err(Error::InvalidInput("Gauss-Lobatto degree must be >= 1".into()));
    }
    let mut nodes = vec![-1.0];
    let mf = m as f64;
    for k in 1..m {
        let mut x = -(std::f64::consts::PI * k as f64 / mf).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(m, x);
            // Legendre equation: (1 - x^2) P'' = 2x P' - m(m+1) P.
            let ddp = (2.0 * x * dp - mf * (mf + 1.0) * p) / (1.0 - x * x);
            let step = dp / ddp;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        nodes.push(x);
    }
    nodes.push(1.0);
    // Enforce exact symmetry.
    for k in 1..=(m / 2) {
        let s = (nodes[m - k] - nodes[k]) / 2.0;
        nodes[k] = -s;
        nodes[m - k] = s;
    }
    if m.is_multiple_of(2) {
        nodes[m / 2] = 0.0;
    }
    Ok(GaussLobattoSet { m, nodes })
}

/// Interior nodes for the internal space of degree `m`.
#[derive(Clone, Debug, PartialEq)]
pub struct InteriorFeketeSet {
    pub m: usize,
    /// Barycentric coordinates of the nodes.
    pub nodes: Vec<[f64; 3]>,
    /// |det V| with V_ij = N̊_j(z_i).
    pub det: f64,
}

impl InteriorFeketeSet {
    pub fn points(&self) -> Vec<RefPoint> {
        self.nodes.iter().map(|&l| RefPoint::from_barycentric(l)).collect()
    }

    pub fn min_barycentric(&self) -> f64 {
        self.nodes
            .iter()
            .flat_map(|l| l.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Interior Vandermonde matrix V_ij = N̊_j(z_i).
pub fn internal_vandermonde(m: usize, points: &[RefPoint]) -> Result<DMatrix<f64>> {
    let basis = internal_basis(m)?;
    Ok(DMatrix::from_fn(points.len(), basis.len(), |i, j| {
        basis[j].eval(points[i])
    }))
}

pub fn internal_det(m: usize, nodes: &[[f64; 3]]) -> Result<f64> {
    let pts: Vec<RefPoint> = nodes.iter().map(|&l| RefPoint::from_barycentric(l)).collect();
    Ok(internal_vandermonde(m, &pts)?.determinant().abs())
}

/// Optimiser settings.
#[derive(Clone, Copy, Debug)]
pub struct FeketeOptions {
    pub max_sweeps: usize,
    pub initial_step: f64,
    pub min_step: f64,
    /// Lattice perturbation amplitude for seeds other than 0, relative to 1/m.
    pub jitter: f64,
}

impl Default for FeketeOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 200,
            initial_step: 0.05,
            min_step: 1e-12,
            jitter: 0.3,
        }
    }
}

/// Multistart maximisation of |det V|; the best of `seeds` starts wins.
pub fn interior_fekete(m: usize, seeds: usize) -> Result<InteriorFeketeSet> {
    interior_fekete_with(m, seeds, FeketeOptions::default())
}

pub fn interior_fekete_with(
    m: usize,
    seeds: usize,
    opts: FeketeOptions,
) -> Result<InteriorFeketeSet> {
    if m < 3 {
        return Err(Error::EmptySpace(format!("no interior nodes for degree {m}")));
    }
    if m > MAX_DEGREE {
        return Err(Error::InvalidInput(format!(
            "interior nodes are supported up to degree {MAX_DEGREE}, got {m}"
        )));
    }
    let basis = internal_basis(m)?;
    let runs: Vec<Option<InteriorFeketeSet>> = (0..seeds.max(1))
        .into_par_iter()
        .map(|seed| {
            let start = lattice_start(m, seed as u64, opts.jitter);
            ascend(m, &basis, start, &opts).map(|nodes| {
                let nodes = canonical_order(symmetrize(m, nodes));
                let det = internal_det(m, &nodes).unwrap_or(0.0);
                InteriorFeketeSet { m, nodes, det }
            })
        })
        .collect();
    runs.into_iter()
        .flatten()
        .filter(|s| s.det.is_finite() && s.det > 0.0)
        .reduce(|best, s| if s.det > best.det { s } else { best })
        .ok_or_else(|| Error::Optimizer(format!("singular Vandermonde at every start, m = {m}")))
}

fn lattice_start(m: usize, seed: u64, jitter: f64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = Vec::with_capacity(internal_dim(m));
    for j in 1..m {
        for i in 1..(m - j) {
            let k = m - i - j;
            let mut l = [k as f64, i as f64, j as f64].map(|v| v / m as f64);
            if seed != 0 {
                let d: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-jitter..jitter) / m as f64);
                let mean = (d[0] + d[1] + d[2]) / 3.0;
                for c in 0..3 {
                    l[c] += d[c] - mean;
                }
                if l.iter().any(|&v| v <= 1e-3) {
                    l = [k as f64, i as f64, j as f64].map(|v| v / m as f64);
                }
            }
            nodes.push(l);
        }
    }
    nodes
}

fn row(basis: &[ShapeFn], l: [f64; 3]) -> DVector<f64> {
    let z = RefPoint::from_barycentric(l);
    DVector::from_iterator(basis.len(), basis.iter().map(|f| f.eval(z)))
}

/// Cyclic coordinate ascent along the barycentric directions e_a - e_b.
/// Candidate moves are scored with the determinant ratio r' . W[:, i] where
/// W = V^-1, and accepted moves update W by Sherman-Morrison.
fn ascend(
    m: usize,
    basis: &[ShapeFn],
    mut nodes: Vec<[f64; 3]>,
    opts: &FeketeOptions,
) -> Option<Vec<[f64; 3]>> {
    const DIRS: [(usize, usize); 3] = [(0, 1), (1, 2), (2, 0)];
    let n = nodes.len();
    let floor = 1e-4 / m as f64;
    let mut steps = vec![[opts.initial_step / m as f64; 3]; n];
    for _ in 0..opts.max_sweeps {
        let v = DMatrix::from_fn(n, n, |i, j| basis[j].eval(RefPoint::from_barycentric(nodes[i])));
        let mut w = v.try_inverse()?;
        let mut moved = false;
        for i in 0..n {
            for (d, &(a, b)) in DIRS.iter().enumerate() {
                let mut s = steps[i][d];
                if s < opts.min_step {
                    continue;
                }
                let mut accepted = false;
                for sign in [1.0, -1.0] {
                    let mut l = nodes[i];
                    l[a] += sign * s;
                    l[b] -= sign * s;
                    if l[a] <= floor || l[b] <= floor {
                        continue;
                    }
                    let r = row(basis, l);
                    let rho = r.dot(&w.column(i));
                    if rho.abs() > 1.0 + 1e-15 {
                        // W' = W - W e_i (r' - r)^T W / rho
                        let wi = w.column(i).into_owned();
                        let old = row(basis, nodes[i]);
                        let delta = (&r - &old).transpose() * &w;
                        w -= wi * delta / rho;
                        nodes[i] = l;
                        accepted = true;
                        moved = true;
                        break;
                    }
                }
                if accepted {
                    s *= 2.0;
                } else {
                    s *= 0.5;
                }
                steps[i][d] = s.min(0.25 / m as f64);
            }
        }
        if !moved && steps.iter().flatten().all(|&s| s < opts.min_step) {
            break;
        }
    }
    Some(nodes)
}

const PERMUTATIONS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [1, 2, 0],
    [2, 0, 1],
    [0, 2, 1],
    [2, 1, 0],
    [1, 0, 2],
];

fn permute(l: [f64; 3], p: [usize; 3]) -> [f64; 3] {
    [l[p[0]], l[p[1]], l[p[2]]]
}

fn inverse(p: [usize; 3]) -> [usize; 3] {
    let mut q = [0; 3];
    for (i, &pi) in p.iter().enumerate() {
        q[pi] = i;
    }
    q
}

fn bary_dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max)
}

/// Averages each node over its orbit under the six symmetries of the
/// triangle, when every image has a matching node. The result is kept only
/// if it does not lower the determinant.
fn symmetrize(m: usize, nodes: Vec<[f64; 3]>) -> Vec<[f64; 3]> {
    const MATCH: f64 = 1e-3;
    let mut out = Vec::with_capacity(nodes.len());
    for &l in &nodes {
        let mut acc = [0.0; 3];
        for p in PERMUTATIONS {
            let image = permute(l, p);
            let Some(best) = nodes
                .iter()
                .copied()
                .min_by(|x, y| bary_dist(*x, image).total_cmp(&bary_dist(*y, image)))
            else {
                return nodes;
            };
            if bary_dist(best, image) > MATCH {
                return nodes;
            }
            let back = permute(best, inverse(p));
            for c in 0..3 {
                acc[c] += back[c] / 6.0;
            }
        }
        let s = acc[0] + acc[1] + acc[2];
        out.push(acc.map(|v| v / s));
    }
    match (internal_det(m, &nodes), internal_det(m, &out)) {
        (Ok(before), Ok(after)) if after >= before * (1.0 - 1e-9) => out,
        _ => nodes,
    }
}

fn canonical_order(mut nodes: Vec<[f64; 3]>) -> Vec<[f64; 3]> {
    nodes.sort_by(|a, b| {
        let key = |l: &[f64; 3]| l.map(|v| (v * 1e9).round() as i64);
        key(a).cmp(&key(b))
    });
    nodes
}

/// Plain-text table, one line `m i b1 b2 b3` per node.
pub fn node_table_text(sets: &[InteriorFeketeSet]) -> String {
    let mut s = String::from("# interior node table v1: m i b1 b2 b3\n");
    for set in sets {
        for (i, l) in set.nodes.iter().enumerate() {
            s.push_str(&format!(
                "{} {} {:.16e} {:.16e} {:.16e}\n",
                set.m, i, l[0], l[1], l[2]
            ));
        }
    }
    s
}

pub fn parse_node_table(text: &str) -> Result<Vec<InteriorFeketeSet>> {
    let mut by_degree: std::collections::BTreeMap<usize, Vec<(usize, [f64; 3])>> =
        Default::default();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let bad = |msg: &str| Error::Parse {
            line: ln + 1,
            msg: msg.into(),
        };
        if f.len() != 5 {
            return Err(bad("expected `m i b1 b2 b3`"));
        }
        let m: usize = f[0].parse().map_err(|_| bad("bad degree"))?;
        let i: usize = f[1].parse().map_err(|_| bad("bad index"))?;
        let mut l = [0.0; 3];
        for c in 0..3 {
            l[c] = f[2 + c].parse().map_err(|_| bad("bad coordinate"))?;
        }
        by_degree.entry(m).or_default().push((i, l));
    }
    by_degree
        .into_iter()
        .map(|(m, mut rows)| {
            rows.sort_by_key(|r| r.0);
            if rows.len() != internal_dim(m) || rows.iter().enumerate().any(|(k, r)| r.0 != k) {
                return Err(Error::Parse {
                    line: 0,
                    msg: format!("degree {m} needs {} dense rows", internal_dim(m)),
                });
            }
            let nodes: Vec<[f64; 3]> = rows.into_iter().map(|r| r.1).collect();
            let det = internal_det(m, &nodes)?;
            Ok(InteriorFeketeSet { m, nodes, det })
        })
        .collect()
}

const SHIPPED_TABLE: &str = include_str!("../data/fekete_nodes.txt");

/// Seeds used when a degree is missing from the shipped table.
pub const DEFAULT_SEEDS: usize = 8;

/// Interior node set for degree `m`, from the shipped table or computed once
/// per process.
pub fn interior_nodes(m: usize) -> Result<Arc<InteriorFeketeSet>> {
    static SLOTS: [OnceLock<std::result::Result<Arc<InteriorFeketeSet>, String>>; MAX_DEGREE + 1] =
        [const { OnceLock::new() }; MAX_DEGREE + 1];
    if m < 3 {
        return Err(Error::EmptySpace(format!("no interior nodes for degree {m}")));
    }
    if m > MAX_DEGREE {
        return Err(Error::InvalidInput(format!(
            "interior nodes are supported up to degree {MAX_DEGREE}, got {m}"
        )));
    }
    SLOTS[m]
        .get_or_init(|| {
            let shipped = parse_node_table(SHIPPED_TABLE)
                .ok()
                .and_then(|sets| sets.into_iter().find(|s| s.m == m));
            match shipped {
                Some(s) => Ok(Arc::new(s)),
                None => {
                    log::info!("computing interior nodes for degree {m}");
                    interior_fekete(m, DEFAULT_SEEDS)
                        .map(Arc::new)
                        .map_err(|e| e.to_string())
                }
            }
        })
        .clone()
        .map_err(Error::Optimizer)
}

/// Max over `grid` of the sum of absolute cardinal functions for the given
/// nodes. `basis` evaluates all basis functions at a point.
pub fn lebesgue_estimate<P: Copy>(
    nodes: &[P],
    grid: &[P],
    basis: impl Fn(P) -> Vec<f64>,
) -> Result<f64> {
    let n = nodes.len();
    let v = DMatrix::from_fn(n, n, |i, j| basis(nodes[i])[j]);
    let lu = v.lu();
    let vt_inv = lu
        .try_inverse()
        .ok_or_else(|| Error::Singular("interpolation nodes are not unisolvent".into()))?;
    // Cardinal values at z: l(z)^T = b(z)^T V^-1.
    Ok(grid
        .iter()
        .map(|&z| {
            let b = DVector::from_vec(basis(z));
            (b.transpose() * &vt_inv).iter().map(|c| c.abs()).sum::<f64>()
        })
        .fold(0.0, f64::max))
}

/// Lebesgue constant of Gauss-Lobatto interpolation of degree `m`, sampled
/// on `grid` uniform points of [-1, 1].
pub fn gauss_lobatto_lebesgue(m: usize, grid: usize) -> Result<f64> {
    let gl = gauss_lobatto(m)?;
    let pts: Vec<f64> = (0..grid)
        .map(|i| -1.0 + 2.0 * i as f64 / (grid - 1).max(1) as f64)
        .collect();
    lebesgue_estimate(&gl.nodes, &pts, |x| (0..=m).map(|k| x.powi(k as i32)).collect())
}

/// Lebesgue constant of internal interpolation of degree `m` on a
/// barycentric grid with `grid` subdivisions per side.
pub fn interior_lebesgue(m: usize, grid: usize) -> Result<f64> {
    let set = interior_nodes(m)?;
    let basis = internal_basis(m)?;
    let pts = crate::refbasis::barycentric_grid(grid);
    lebesgue_estimate(&set.points(), &pts, |z| basis.iter().map(|f| f.eval(z)).collect())
}
