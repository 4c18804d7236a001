//! P1 finite elements for the Bloch-shifted Helmholtz operator on a periodic
//! unit cell: find λ, u with
//! ∫ α (∇ + ik)u · conj((∇ + ik)v) = λ ∫ β u conj(v) for all periodic v.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{BandProvider, BandSample, SingularSet};
use crate::error::{Error, Result};
use crate::mesh::WaveVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Lattice {
    #[default]
    Square,
    Hexagonal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Mode {
    /// α = 1/ε, β = 1.
    #[default]
    TE,
    /// α = 1, β = ε.
    TM,
}

/// How each grid cell of the unit cell is split into two triangles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase")]
pub enum Diagonals {
    /// Every cell split along the a1 + a2 diagonal.
    Uniform,
    /// Diagonal direction alternates in a checkerboard pattern.
    #[default]
    Alternating,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct FemConfig {
    pub lattice: Lattice,
    pub mode: Mode,
    pub epsilon: f64,
    /// Disk radius over the lattice constant; defaults to 0.2 (square) and
    /// 1/9 (hexagonal).
    pub inclusion_radius_ratio: Option<f64>,
    pub cell_mesh_n: usize,
    #[serde(rename = "L")]
    pub num_bands: usize,
    pub lattice_constant: f64,
    pub diagonals: Diagonals,
}

impl Default for FemConfig {
    fn default() -> Self {
        Self {
            lattice: Lattice::Square,
            mode: Mode::TE,
            epsilon: 8.9,
            inclusion_radius_ratio: None,
            cell_mesh_n: 16,
            num_bands: 6,
            lattice_constant: 1.0,
            diagonals: Diagonals::default(),
        }
    }
}

impl FemConfig {
    pub fn radius_ratio(&self) -> f64 {
        self.inclusion_radius_ratio.unwrap_or(match self.lattice {
            Lattice::Square => 0.2,
            Lattice::Hexagonal => 1.0 / 9.0,
        })
    }

    /// Irreducible Brillouin zone: Γ-X-M (square) or Γ-K-M (hexagonal).
    pub fn ibz(&self) -> [WaveVector; 3] {
        let a = self.lattice_constant;
        let pi = std::f64::consts::PI;
        match self.lattice {
            Lattice::Square => [
                WaveVector::new(0.0, 0.0),
                WaveVector::new(pi / a, 0.0),
                WaveVector::new(pi / a, pi / a),
            ],
            Lattice::Hexagonal => [
                WaveVector::new(0.0, 0.0),
                WaveVector::new(4.0 * pi / (3.0 * a), 0.0),
                WaveVector::new(pi / a, pi / (3f64.sqrt() * a)),
            ],
        }
    }

    /// Primitive lattice vectors.
    pub fn lattice_vectors(&self) -> [WaveVector; 2] {
        let a = self.lattice_constant;
        match self.lattice {
            Lattice::Square => [WaveVector::new(a, 0.0), WaveVector::new(0.0, a)],
            Lattice::Hexagonal => {
                let h = a / 2.0;
                let s = 3f64.sqrt();
                [WaveVector::new(h, h * s), WaveVector::new(h, -h * s)]
            }
        }
    }

    /// Reciprocal vectors b_i with a_i · b_j = 2π δ_ij.
    pub fn reciprocal_vectors(&self) -> [WaveVector; 2] {
        let [a1, a2] = self.lattice_vectors();
        let det = a1.k1 * a2.k2 - a1.k2 * a2.k1;
        let f = 2.0 * std::f64::consts::PI / det;
        [
            WaveVector::new(a2.k2 * f, -a2.k1 * f),
            WaveVector::new(-a1.k2 * f, a1.k1 * f),
        ]
    }

    /// Disk centres and radius of the inclusion(s) in one cell.
    pub fn inclusions(&self) -> (Vec<WaveVector>, f64) {
        let [a1, a2] = self.lattice_vectors();
        let centre = (a1 + a2) * 0.5;
        let r = self.radius_ratio() * self.lattice_constant;
        match self.lattice {
            Lattice::Square => (vec![centre], r),
            Lattice::Hexagonal => {
                let big = self.lattice_constant / 3.0;
                let pts = (0..6)
                    .map(|j| {
                        let t = std::f64::consts::PI * j as f64 / 3.0;
                        centre + WaveVector::new(t.cos(), t.sin()) * big
                    })
                    .collect();
                (pts, r)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct CellElement {
    pub dofs: [usize; 3],
    pub grads: [[f64; 2]; 3],
    pub area: f64,
    pub alpha: f64,
    pub beta: f64,
    pub inside: bool,
}

/// Structured periodic triangulation of the unit cell with per-element
/// coefficients.
#[derive(Debug)]
pub struct UnitCell {
    pub config: FemConfig,
    pub n: usize,
    pub elements: Vec<CellElement>,
    mass_factor: OnceLock<std::result::Result<Cholesky<f64, Dyn>, String>>,
}

impl UnitCell {
    pub fn new(config: FemConfig) -> Result<Self> {
        let n = config.cell_mesh_n;
        if n < 2 {
            return Err(Error::InvalidInput("cellMeshN must be >= 2".into()));
        }
        if !(config.epsilon > 0.0) || !(config.lattice_constant > 0.0) {
            return Err(Error::InvalidInput(
                "epsilon and the lattice constant must be positive".into(),
            ));
        }
        let [a1, a2] = config.lattice_vectors();
        let (centres, radius) = config.inclusions();
        let pos = |i: usize, j: usize| a1 * (i as f64 / n as f64) + a2 * (j as f64 / n as f64);
        let dof = |i: usize, j: usize| (j % n) * n + (i % n);
        let mut elements = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let flip = config.diagonals == Diagonals::Alternating && (i + j) % 2 == 1;
                let pair = if flip {
                    [
                        [(i, j), (i + 1, j), (i, j + 1)],
                        [(i + 1, j), (i + 1, j + 1), (i, j + 1)],
                    ]
                } else {
                    [
                        [(i, j), (i + 1, j), (i + 1, j + 1)],
                        [(i, j), (i + 1, j + 1), (i, j + 1)],
                    ]
                };
                for tri in pair {
                    let p = tri.map(|(a, b)| pos(a, b));
                    let c = (p[0] + p[1] + p[2]) * (1.0 / 3.0);
                    let inside = centres.iter().any(|&d| {
                        (-1..=1).any(|s: i32| {
                            (-1..=1).any(|t: i32| {
                                c.dist(d + a1 * s as f64 + a2 * t as f64) <= radius
                            })
                        })
                    });
                    let eps = if inside { config.epsilon } else { 1.0 };
                    let (alpha, beta) = match config.mode {
                        Mode::TE => (1.0 / eps, 1.0),
                        Mode::TM => (1.0, eps),
                    };
                    let (area, grads) = p1_gradients(p);
                    elements.push(CellElement {
                        dofs: tri.map(|(a, b)| dof(a, b)),
                        grads,
                        area,
                        alpha,
                        beta,
                        inside,
                    });
                }
            }
        }
        Ok(Self {
            config,
            n,
            elements,
            mass_factor: OnceLock::new(),
        })
    }

    pub fn num_dofs(&self) -> usize {
        self.n * self.n
    }

    pub fn inclusion_fraction(&self) -> f64 {
        let total: f64 = self.elements.iter().map(|e| e.area).sum();
        self.elements
            .iter()
            .filter(|e| e.inside)
            .map(|e| e.area)
            .sum::<f64>()
            / total
    }

    /// β-weighted P1 mass matrix.
    pub fn mass(&self) -> DMatrix<f64> {
        let n = self.num_dofs();
        let mut b = DMatrix::zeros(n, n);
        for e in &self.elements {
            for a in 0..3 {
                for c in 0..3 {
                    let m = e.area / 12.0 * if a == c { 2.0 } else { 1.0 };
                    b[(e.dofs[a], e.dofs[c])] += e.beta * m;
                }
            }
        }
        b
    }

    /// Bloch stiffness A(k), row = test function, column = trial function.
    pub fn stiffness(&self, k: WaveVector) -> DMatrix<Complex64> {
        let n = self.num_dofs();
        let kk = k.dot(k);
        let mut a = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
        for e in &self.elements {
            let kg: [f64; 3] = std::array::from_fn(|i| k.k1 * e.grads[i][0] + k.k2 * e.grads[i][1]);
            let third = e.area / 3.0;
            for r in 0..3 {
                for c in 0..3 {
                    let gg = e.grads[r][0] * e.grads[c][0] + e.grads[r][1] * e.grads[c][1];
                    let m = e.area / 12.0 * if r == c { 2.0 } else { 1.0 };
                    let re = e.area * gg + kk * m;
                    let im = third * (kg[r] - kg[c]);
                    a[(e.dofs[r], e.dofs[c])] += Complex64::new(e.alpha * re, e.alpha * im);
                }
            }
        }
        a
    }

    fn cholesky(&self) -> Result<&Cholesky<f64, Dyn>> {
        self.mass_factor
            .get_or_init(|| {
                Cholesky::new(self.mass()).ok_or_else(|| "mass matrix is not positive definite".into())
            })
            .as_ref()
            .map_err(|e| Error::Discretization(e.clone()))
    }

    /// C = L⁻¹ A L⁻ᴴ for B = L Lᵀ, Hermitian-symmetrised.
    fn reduced(&self, k: WaveVector) -> Result<(DMatrix<Complex64>, DMatrix<Complex64>)> {
        let l = self.cholesky()?.l().map(|x| Complex64::new(x, 0.0));
        let a = self.stiffness(k);
        let y = l
            .solve_lower_triangular(&a)
            .ok_or_else(|| Error::Discretization("triangular solve failed".into()))?;
        let z = l
            .solve_lower_triangular(&y.adjoint())
            .ok_or_else(|| Error::Discretization("triangular solve failed".into()))?;
        let c = (&z + z.adjoint()) * Complex64::new(0.5, 0.0);
        Ok((c, l))
    }

    /// Lowest `count` eigenvalues, ascending.
    pub fn eigenvalues(&self, k: WaveVector, count: usize) -> Result<Vec<f64>> {
        self.check_count(count)?;
        let (c, _) = self.reduced(k)?;
        let mut ev: Vec<f64> = c.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev.truncate(count);
        clamp_small_negatives(ev, c.norm())
    }

    /// Lowest `count` eigenpairs, ascending, with uᴴ B u = 1.
    pub fn solve_bands(&self, k: WaveVector, count: usize) -> Result<Vec<EigenPair>> {
        self.check_count(count)?;
        let (c, l) = self.reduced(k)?;
        let norm = c.norm();
        let eig = SymmetricEigen::new(c);
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let lt = l.adjoint();
        let values = clamp_small_negatives(
            order.iter().take(count).map(|&i| eig.eigenvalues[i]).collect(),
            norm,
        )?;
        order
            .iter()
            .take(count)
            .zip(values)
            .map(|(&i, lambda)| {
                let y = eig.eigenvectors.column(i).into_owned();
                let u = lt
                    .solve_upper_triangular(&y)
                    .ok_or_else(|| Error::Discretization("back substitution failed".into()))?;
                Ok(EigenPair { lambda, u })
            })
            .collect()
    }

    fn check_count(&self, count: usize) -> Result<()> {
        if count == 0 || count > self.num_dofs() {
            return Err(Error::InvalidInput(format!(
                "{count} bands requested from {} degrees of freedom",
                self.num_dofs()
            )));
        }
        Ok(())
    }

    /// m_α(u, u) and m_αi(u, u) for i = 1, 2, as complex numbers; both are
    /// real up to rounding.
    pub fn quadratic_forms(&self, u: &DVector<Complex64>) -> (Complex64, [Complex64; 2]) {
        let i = Complex64::new(0.0, 1.0);
        let mut m = Complex64::new(0.0, 0.0);
        let mut mi = [Complex64::new(0.0, 0.0); 2];
        for e in &self.elements {
            let third = e.area / 3.0;
            for r in 0..3 {
                let ur = u[e.dofs[r]].conj();
                for c in 0..3 {
                    let uc = u[e.dofs[c]];
                    let w = e.area / 12.0 * if r == c { 2.0 } else { 1.0 };
                    m += ur * uc * (e.alpha * w);
                    for d in 0..2 {
                        mi[d] += ur * uc * i * (e.alpha * third * (e.grads[r][d] - e.grads[c][d]));
                    }
                }
            }
        }
        (m, mi)
    }

    /// ∂ω/∂k_i = (2 k_i m_α(u,u) + m_αi(u,u)) / (2ω). Eigenvalues below
    /// 1e-10 are treated as the rounding image of zero.
    pub fn group_velocity(&self, k: WaveVector, pair: &EigenPair) -> Result<[f64; 2]> {
        let omega = pair.lambda.max(0.0).sqrt();
        if pair.lambda <= 1e-10 {
            return Err(Error::SingularPoint);
        }
        let (m, mi) = self.quadratic_forms(&pair.u);
        let kv = [k.k1, k.k2];
        Ok(std::array::from_fn(|d| {
            (2.0 * kv[d] * m.re + mi[d].re) / (2.0 * omega)
        }))
    }
}

/// Area and constant gradients of the P1 hat functions of a triangle.
fn p1_gradients(p: [WaveVector; 3]) -> (f64, [[f64; 2]; 3]) {
    let det = (p[1].k1 - p[0].k1) * (p[2].k2 - p[0].k2) - (p[2].k1 - p[0].k1) * (p[1].k2 - p[0].k2);
    let grads = std::array::from_fn(|i| {
        let (b, c) = (p[(i + 1) % 3], p[(i + 2) % 3]);
        [(b.k2 - c.k2) / det, (c.k1 - b.k1) / det]
    });
    (det.abs() / 2.0, grads)
}

fn clamp_small_negatives(mut values: Vec<f64>, norm: f64) -> Result<Vec<f64>> {
    for v in values.iter_mut() {
        if *v < -1e-9 * norm.max(1.0) {
            return Err(Error::Discretization(format!("negative eigenvalue {v}")));
        }
        *v = v.max(0.0);
    }
    Ok(values)
}

#[derive(Clone, Debug)]
pub struct EigenPair {
    pub lambda: f64,
    pub u: DVector<Complex64>,
}

type Cache<T> = Mutex<HashMap<(u64, u64), Arc<T>>>;

/// Memoising band provider over a unit cell; Γ is its singular point.
pub struct FemBands {
    cell: UnitCell,
    values: Cache<Vec<f64>>,
    samples: Cache<BandSample>,
    solves: AtomicUsize,
}

impl std::fmt::Debug for FemBands {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FemBands")
            .field("config", &self.cell.config)
            .field("solves", &self.solve_count())
            .finish()
    }
}

impl FemBands {
    pub fn new(config: FemConfig) -> Result<Self> {
        if config.num_bands < 1 {
            return Err(Error::InvalidInput("L must be >= 1".into()));
        }
        Ok(Self {
            cell: UnitCell::new(config)?,
            values: Mutex::new(HashMap::new()),
            samples: Mutex::new(HashMap::new()),
            solves: AtomicUsize::new(0),
        })
    }

    pub fn cell(&self) -> &UnitCell {
        &self.cell
    }

    /// Number of eigensolves performed so far.
    pub fn solve_count(&self) -> usize {
        self.solves.load(Ordering::Relaxed)
    }

    fn lookup<T>(cache: &Cache<T>, k: WaveVector) -> Option<Arc<T>> {
        cache.lock().ok()?.get(&k.bits()).cloned()
    }

    fn store<T>(cache: &Cache<T>, k: WaveVector, v: Arc<T>) {
        if let Ok(mut c) = cache.lock() {
            c.insert(k.bits(), v);
        }
    }
}

impl BandProvider for FemBands {
    fn num_bands(&self) -> usize {
        self.cell.config.num_bands
    }

    fn eigenvalues(&self, k: WaveVector) -> Result<Vec<f64>> {
        if let Some(s) = Self::lookup(&self.samples, k) {
            return Ok(s.lambda.clone());
        }
        if let Some(v) = Self::lookup(&self.values, k) {
            return Ok((*v).clone());
        }
        self.solves.fetch_add(1, Ordering::Relaxed);
        let v = self.cell.eigenvalues(k, self.num_bands())?;
        Self::store(&self.values, k, Arc::new(v.clone()));
        Ok(v)
    }

    fn sample(&self, k: WaveVector) -> Result<BandSample> {
        if let Some(s) = Self::lookup(&self.samples, k) {
            return Ok((*s).clone());
        }
        self.solves.fetch_add(1, Ordering::Relaxed);
        let l = self.num_bands();
        let extra = (l < self.cell.num_dofs()) as usize;
        let pairs = self.cell.solve_bands(k, l + extra)?;
        let lambda: Vec<f64> = pairs.iter().take(l).map(|p| p.lambda).collect();
        let singular = self.singular_set().contains(k, 1e-12);
        let grads = (0..l)
            .map(|q| {
                let tol = 1e-8 * pairs[q].lambda.max(1.0);
                let degenerate = (q > 0 && pairs[q].lambda - pairs[q - 1].lambda <= tol)
                    || (q + 1 < pairs.len() && pairs[q + 1].lambda - pairs[q].lambda <= tol);
                if singular || degenerate {
                    return Ok(None);
                }
                match self.cell.group_velocity(k, &pairs[q]) {
                    Ok(g) => Ok(Some(g)),
                    Err(Error::SingularPoint) => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let s = BandSample::from_lambda(lambda, grads);
        Self::store(&self.samples, k, Arc::new(s.clone()));
        Ok(s)
    }

    fn singular_set(&self) -> SingularSet {
        SingularSet {
            points: vec![WaveVector::new(0.0, 0.0)],
            lines: vec![],
        }
    }
}

/// The `count` smallest values of |k + G|² over reciprocal lattice vectors
/// G = m b1 + n b2 with |m|, |n| <= `reach`.
pub fn plane_wave_eigenvalues(config: &FemConfig, k: WaveVector, count: usize, reach: i32) -> Vec<f64> {
    let [b1, b2] = config.reciprocal_vectors();
    let mut v: Vec<f64> = (-reach..=reach)
        .flat_map(|m| (-reach..=reach).map(move |n| (m, n)))
        .map(|(m, n)| {
            let q = k + b1 * m as f64 + b2 * n as f64;
            q.dot(q)
        })
        .collect();
    v.sort_by(f64::total_cmp);
    v.truncate(count);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn homogeneous(n: usize, mode: Mode) -> FemConfig {
        FemConfig {
            epsilon: 1.0,
            cell_mesh_n: n,
            mode,
            num_bands: 5,
            ..FemConfig::default()
        }
    }

    #[test]
    fn periodic_identification() {
        let cell = UnitCell::new(homogeneous(8, Mode::TE)).unwrap();
        // (n+1)^2 grid points minus 2n+1 duplicated boundary points.
        assert_eq!(cell.num_dofs(), 81 - 17);
        assert_eq!(cell.elements.len(), 128);
        let total: f64 = cell.elements.iter().map(|e| e.area).sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn diagonal_patterns_cover_cell() {
        for diagonals in [Diagonals::Uniform, Diagonals::Alternating] {
            for n in [5, 8] {
                let cell = UnitCell::new(FemConfig {
                    diagonals,
                    ..homogeneous(n, Mode::TE)
                })
                .unwrap();
                let total: f64 = cell.elements.iter().map(|e| e.area).sum();
                assert!((total - 1.0).abs() < 1e-13);
                // Incident area per DOF: 6, 4 or 8 half-cells.
                let mut touch = vec![0.0; cell.num_dofs()];
                for e in &cell.elements {
                    for &d in &e.dofs {
                        touch[d] += e.area;
                    }
                }
                let h2 = 1.0 / (n * n) as f64;
                assert!(touch
                    .iter()
                    .all(|&t| [2.0, 3.0, 4.0].iter().any(|c| (t - c * h2).abs() < 1e-14)));
                assert!((touch.iter().sum::<f64>() - 3.0).abs() < 1e-12);
                let ev = cell.eigenvalues(WaveVector::default(), 1).unwrap();
                assert!(ev[0].abs() < 1e-9);
            }
        }
    }

    #[test]
    fn gamma_laplacian_kernel() {
        let cell = UnitCell::new(homogeneous(8, Mode::TE)).unwrap();
        let a = cell.stiffness(WaveVector::default());
        assert!(a.iter().all(|z| z.im == 0.0));
        let ones = DVector::from_element(cell.num_dofs(), Complex64::new(1.0, 0.0));
        assert!((&a * ones).camax() < 1e-12);
        let ev = cell.eigenvalues(WaveVector::default(), 2).unwrap();
        assert!(ev[0].abs() < 1e-10);
    }

    #[test]
    fn hermitian_and_semidefinite() {
        let cfg = FemConfig {
            cell_mesh_n: 8,
            ..FemConfig::default()
        };
        let cell = UnitCell::new(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            let k = WaveVector::new(rng.gen_range(-PI..PI), rng.gen_range(-PI..PI));
            let a = cell.stiffness(k);
            assert!((&a - a.adjoint()).camax() < 1e-12);
            let ev = a.clone().symmetric_eigenvalues();
            let min = ev.iter().copied().fold(f64::INFINITY, f64::min);
            assert!(min >= -1e-9 * a.norm());
        }
    }

    #[test]
    fn mass_conservation() {
        let cfg = FemConfig {
            mode: Mode::TM,
            cell_mesh_n: 20,
            ..FemConfig::default()
        };
        let cell = UnitCell::new(cfg.clone()).unwrap();
        let b = cell.mass();
        let frac = cell.inclusion_fraction();
        let expect = 1.0 + (cfg.epsilon - 1.0) * frac;
        assert!((b.sum() - expect).abs() < 1e-12);
        // The centroid rule approximates the disk area.
        assert!((frac - PI * 0.04).abs() < 0.02, "{frac}");
        // Row sums are β-weighted thirds of adjacent element areas.
        let mut rows = vec![0.0; cell.num_dofs()];
        for e in &cell.elements {
            for &d in &e.dofs {
                rows[d] += e.beta * e.area / 3.0;
            }
        }
        for (i, r) in rows.iter().enumerate() {
            assert!((b.row(i).sum() - r).abs() < 1e-14);
        }
    }

    #[test]
    fn homogeneous_plane_waves() {
        let cell = UnitCell::new(homogeneous(16, Mode::TE)).unwrap();
        let ev = cell.eigenvalues(WaveVector::default(), 2).unwrap();
        assert!(ev[0].abs() < 1e-9);
        assert!((ev[1] - 4.0 * PI * PI).abs() / (4.0 * PI * PI) < 0.02, "{}", ev[1]);
        let k = WaveVector::new(PI / 2.0, 0.0);
        let ev = cell.eigenvalues(k, 1).unwrap();
        assert!((ev[0] - PI * PI / 4.0).abs() / (PI * PI / 4.0) < 0.01);
    }

    #[test]
    fn eigenpairs_are_normalised_residuals_small() {
        let cfg = FemConfig {
            cell_mesh_n: 10,
            num_bands: 4,
            ..FemConfig::default()
        };
        let cell = UnitCell::new(cfg).unwrap();
        let k = WaveVector::new(0.7, 0.3);
        let a = cell.stiffness(k);
        let b = cell.mass().map(|x| Complex64::new(x, 0.0));
        for p in cell.solve_bands(k, 4).unwrap() {
            let norm = (p.u.adjoint() * &b * &p.u)[(0, 0)];
            assert!((norm.re - 1.0).abs() < 1e-10 && norm.im.abs() < 1e-10);
            let r = &a * &p.u - &b * &p.u * Complex64::new(p.lambda, 0.0);
            assert!(r.norm() <= 1e-8 * a.norm() * p.u.norm());
        }
    }

    #[test]
    fn group_velocity_cases() {
        let cell = UnitCell::new(homogeneous(16, Mode::TE)).unwrap();
        let k = WaveVector::new(PI / 2.0, 0.0);
        let pairs = cell.solve_bands(k, 1).unwrap();
        let g = cell.group_velocity(k, &pairs[0]).unwrap();
        assert!((g[0] - 1.0).abs() < 0.01 && g[1].abs() < 0.01, "{g:?}");
        let (m, mi) = cell.quadratic_forms(&pairs[0].u);
        assert!(m.im.abs() < 1e-10 && mi[0].im.abs() < 1e-10 && mi[1].im.abs() < 1e-10);

        let cfg = FemConfig {
            cell_mesh_n: 12,
            num_bands: 3,
            ..FemConfig::default()
        };
        let cell = UnitCell::new(cfg).unwrap();
        let k = WaveVector::new(0.4, 1.1);
        let p = cell.solve_bands(k, 1).unwrap();
        let g = cell.group_velocity(k, &p[0]).unwrap();
        let h = 1e-5;
        let w = |k: WaveVector| cell.eigenvalues(k, 1).unwrap()[0].sqrt();
        let fd = [
            (w(k + WaveVector::new(h, 0.0)) - w(k - WaveVector::new(h, 0.0))) / (2.0 * h),
            (w(k + WaveVector::new(0.0, h)) - w(k - WaveVector::new(0.0, h))) / (2.0 * h),
        ];
        for d in 0..2 {
            assert!((g[d] - fd[d]).abs() < 1e-5 * fd[d].abs().max(1.0), "{g:?} {fd:?}");
        }
        let p = cell.solve_bands(WaveVector::default(), 1).unwrap();
        assert!(matches!(
            cell.group_velocity(WaveVector::default(), &p[0]),
            Err(Error::SingularPoint)
        ));
    }

    #[test]
    fn te_tm_agree_for_vacuum() {
        let te = UnitCell::new(homogeneous(8, Mode::TE)).unwrap();
        let tm = UnitCell::new(homogeneous(8, Mode::TM)).unwrap();
        let k = WaveVector::new(1.3, 0.4);
        let a = te.eigenvalues(k, 5).unwrap();
        let b = tm.eigenvalues(k, 5).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-10 * x.max(1.0));
        }
    }

    #[test]
    fn provider_cache_and_invariants() {
        let cfg = FemConfig {
            cell_mesh_n: 8,
            num_bands: 4,
            ..FemConfig::default()
        };
        let p = FemBands::new(cfg.clone()).unwrap();
        let k = WaveVector::new(1.0, 0.5);
        let first = p.sample(k).unwrap();
        let n = p.solve_count();
        let again = p.sample(k).unwrap();
        assert_eq!(p.solve_count(), n);
        assert_eq!(first, again);
        assert_eq!(p.eigenvalues(k).unwrap(), first.lambda);
        assert_eq!(p.solve_count(), n);

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let ibz = cfg.ibz();
        for _ in 0..20 {
            let (mut a, mut b): (f64, f64) = (rng.gen(), rng.gen());
            if a + b > 1.0 {
                a = 1.0 - a;
                b = 1.0 - b;
            }
            let k = ibz[0] * (1.0 - a - b) + ibz[1] * a + ibz[2] * b;
            let l = p.eigenvalues(k).unwrap();
            assert!(l.windows(2).all(|w| w[0] <= w[1]));
            assert!(l.iter().all(|&x| x >= 0.0));
        }
        let g = p.sample(WaveVector::default()).unwrap();
        assert!(g.grad_omega.iter().all(|x| x.is_none()));
    }

    #[test]
    fn eigenvalues_are_lipschitz_along_a_segment() {
        let cfg = FemConfig {
            cell_mesh_n: 8,
            num_bands: 3,
            ..FemConfig::default()
        };
        let cell = UnitCell::new(cfg).unwrap();
        let (a, b) = (WaveVector::new(0.3, 0.1), WaveVector::new(2.5, 1.9));
        let mut worst: f64 = 0.0;
        let mut prev = cell.eigenvalues(a, 3).unwrap();
        for i in 1..=20 {
            let k = a + (b - a) * (i as f64 / 20.0);
            let d = (b - a).norm() / 20.0;
            let cur = cell.eigenvalues(k, 3).unwrap();
            for q in 0..3 {
                worst = worst.max((cur[q] - prev[q]).abs() / d);
            }
            prev = cur;
        }
        eprintln!("measured Lipschitz constant of λ along segment: {worst:.3}");
        assert!(worst < 50.0);
    }

    #[test]
    fn hexagonal_geometry() {
        let cfg = FemConfig {
            lattice: Lattice::Hexagonal,
            cell_mesh_n: 12,
            ..FemConfig::default()
        };
        let [a1, a2] = cfg.lattice_vectors();
        let [b1, b2] = cfg.reciprocal_vectors();
        assert!((a1.dot(b1) - 2.0 * PI).abs() < 1e-12 && a1.dot(b2).abs() < 1e-12);
        assert!((a2.dot(b2) - 2.0 * PI).abs() < 1e-12);
        // M is half a reciprocal vector.
        let m = cfg.ibz()[2];
        assert!(m.dist(b1 * 0.5) < 1e-12);
        let cell = UnitCell::new(cfg).unwrap();
        let total: f64 = cell.elements.iter().map(|e| e.area).sum();
        assert!((total - 3f64.sqrt() / 2.0).abs() < 1e-12);
        assert!(cell.inclusion_fraction() > 0.0);
        let ev = cell.eigenvalues(WaveVector::new(0.5, 0.2), 3).unwrap();
        assert!(ev.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn config_json_keys() {
        let cfg: FemConfig = serde_json::from_str(
            r#"{"lattice":"hexagonal","mode":"TM","epsilon":2.0,"inclusionRadiusRatio":0.1,"cellMeshN":6,"L":4}"#,
        )
        .unwrap();
        assert_eq!(cfg.lattice, Lattice::Hexagonal);
        assert_eq!(cfg.mode, Mode::TM);
        assert_eq!(cfg.num_bands, 4);
        assert_eq!(cfg.radius_ratio(), 0.1);
        assert!(UnitCell::new(FemConfig {
            cell_mesh_n: 1,
            ..FemConfig::default()
        })
        .is_err());
    }
}
