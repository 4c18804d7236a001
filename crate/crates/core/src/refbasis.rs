//! Shape functions on the reference equilateral triangle with vertices
//! (-1, 0), (1, 0) and (0, sqrt 3).
//!
//! Indices are zero-based: nodal function `i` is one at vertex `i`, and face
//! `i` is the face opposite vertex `i`, running from vertex `i+1` to `i+2`
//! (cyclically).

use crate::error::{Error, Result};

pub const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct RefPoint {
    pub x: f64,
    pub y: f64,
}

impl RefPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Reference vertices.
    pub const VERTICES: [RefPoint; 3] = [
        RefPoint::new(-1.0, 0.0),
        RefPoint::new(1.0, 0.0),
        RefPoint::new(0.0, SQRT3),
    ];

    pub const CENTROID: RefPoint = RefPoint::new(0.0, SQRT3 / 3.0);

    pub fn from_barycentric(l: [f64; 3]) -> Self {
        let v = Self::VERTICES;
        Self::new(
            l[0] * v[0].x + l[1] * v[1].x + l[2] * v[2].x,
            l[0] * v[0].y + l[1] * v[1].y + l[2] * v[2].y,
        )
    }

    /// Barycentric coordinates, which coincide with the nodal functions.
    pub fn barycentric(self) -> [f64; 3] {
        [nodal(0, self), nodal(1, self), nodal(2, self)]
    }

    /// Point on face `f` at parameter `t` in [-1, 1], running from vertex
    /// `f+1` (t = -1) to vertex `f+2` (t = 1).
    pub fn on_face(f: usize, t: f64) -> Self {
        let mut l = [0.0; 3];
        l[(f + 1) % 3] = (1.0 - t) / 2.0;
        l[(f + 2) % 3] = (1.0 + t) / 2.0;
        Self::from_barycentric(l)
    }

    pub fn min_barycentric(self) -> f64 {
        self.barycentric().into_iter().fold(f64::INFINITY, f64::min)
    }
}

/// Total degree `m` and face degrees `faces[i]` of a local space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DegreeSignature {
    pub m: usize,
    pub faces: [usize; 3],
}

impl DegreeSignature {
    pub fn new(m: usize, faces: [usize; 3]) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidInput(format!("element degree {m} < 2")));
        }
        if faces.iter().any(|&f| f < 1 || f > m) {
            return Err(Error::InvalidInput(format!(
                "face degrees {faces:?} must lie in 1..={m}"
            )));
        }
        Ok(Self { m, faces })
    }

    pub fn uniform(m: usize) -> Result<Self> {
        Self::new(m, [m; 3])
    }

    /// Dimension of the constrained space.
    pub fn space_dim(&self) -> usize {
        3 + self.faces.iter().map(|f| f - 1).sum::<usize>() + internal_dim(self.m)
    }

    /// The signature's basis: three nodal, then side functions face by face
    /// with ascending degree, then internal functions.
    pub fn basis(&self) -> Vec<ShapeFn> {
        let mut b: Vec<ShapeFn> = (0..3).map(ShapeFn::Nodal).collect();
        for face in 0..3 {
            b.extend((2..=self.faces[face]).map(|j| ShapeFn::Side { face, j }));
        }
        b.extend(
            internal_exponents(self.m)
                .into_iter()
                .map(|(a, b)| ShapeFn::Internal { a, b }),
        );
        b
    }
}

/// m̂ = (m-1)(m-2)/2, zero for m < 3.
pub fn internal_dim(m: usize) -> usize {
    if m < 3 {
        0
    } else {
        (m - 1) * (m - 2) / 2
    }
}

/// Monomial exponents `(a, b)` of x^a y^b with a + b <= m - 3, ordered by
/// total degree, then by `a`.
pub fn internal_exponents(m: usize) -> Vec<(usize, usize)> {
    let mut e = Vec::with_capacity(internal_dim(m));
    if m >= 3 {
        for d in 0..=(m - 3) {
            for a in 0..=d {
                e.push((a, d - a));
            }
        }
    }
    e
}

pub fn nodal(i: usize, z: RefPoint) -> f64 {
    match i {
        0 => (1.0 - z.x - z.y / SQRT3) / 2.0,
        1 => (1.0 + z.x - z.y / SQRT3) / 2.0,
        _ => z.y / SQRT3,
    }
}

pub fn nodal_gradient(i: usize) -> [f64; 2] {
    match i {
        0 => [-0.5, -0.5 / SQRT3],
        1 => [0.5, -0.5 / SQRT3],
        _ => [0.0, 1.0 / SQRT3],
    }
}

/// Side function of degree `j >= 2` on face `f`:
/// N_{f+1} N_{f+2} t^{j-2} with t = N_{f+2} - N_{f+1}.
pub fn side(f: usize, j: usize, z: RefPoint) -> f64 {
    let a = nodal((f + 1) % 3, z);
    let b = nodal((f + 2) % 3, z);
    a * b * powi(b - a, j - 2)
}

pub fn side_gradient(f: usize, j: usize, z: RefPoint) -> [f64; 2] {
    let (ia, ib) = ((f + 1) % 3, (f + 2) % 3);
    let (a, b) = (nodal(ia, z), nodal(ib, z));
    let (ga, gb) = (nodal_gradient(ia), nodal_gradient(ib));
    let p = j - 2;
    let t = b - a;
    let tp = powi(t, p);
    let dtp = if p == 0 { 0.0 } else { p as f64 * powi(t, p - 1) };
    std::array::from_fn(|k| tp * (b * ga[k] + a * gb[k]) + a * b * dtp * (gb[k] - ga[k]))
}

/// The bubble N_1 N_2 N_3.
pub fn bubble(z: RefPoint) -> f64 {
    nodal(0, z) * nodal(1, z) * nodal(2, z)
}

pub fn bubble_gradient(z: RefPoint) -> [f64; 2] {
    let n = [nodal(0, z), nodal(1, z), nodal(2, z)];
    let g = [nodal_gradient(0), nodal_gradient(1), nodal_gradient(2)];
    std::array::from_fn(|k| g[0][k] * n[1] * n[2] + n[0] * g[1][k] * n[2] + n[0] * n[1] * g[2][k])
}

/// Internal function bubble * x^a y^b.
pub fn internal(a: usize, b: usize, z: RefPoint) -> f64 {
    bubble(z) * powi(z.x, a) * powi(z.y, b)
}

pub fn internal_gradient(a: usize, b: usize, z: RefPoint) -> [f64; 2] {
    let w = bubble(z);
    let gw = bubble_gradient(z);
    let mono = powi(z.x, a) * powi(z.y, b);
    let dx = if a == 0 {
        0.0
    } else {
        a as f64 * powi(z.x, a - 1) * powi(z.y, b)
    };
    let dy = if b == 0 {
        0.0
    } else {
        b as f64 * powi(z.x, a) * powi(z.y, b - 1)
    };
    [gw[0] * mono + w * dx, gw[1] * mono + w * dy]
}

fn powi(x: f64, n: usize) -> f64 {
    x.powi(n as i32)
}

/// A single shape function.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShapeFn {
    Nodal(usize),
    Side { face: usize, j: usize },
    Internal { a: usize, b: usize },
}

impl ShapeFn {
    pub fn eval(&self, z: RefPoint) -> f64 {
        match *self {
            ShapeFn::Nodal(i) => nodal(i, z),
            ShapeFn::Side { face, j } => side(face, j, z),
            ShapeFn::Internal { a, b } => internal(a, b, z),
        }
    }

    pub fn gradient(&self, z: RefPoint) -> [f64; 2] {
        match *self {
            ShapeFn::Nodal(i) => nodal_gradient(i),
            ShapeFn::Side { face, j } => side_gradient(face, j, z),
            ShapeFn::Internal { a, b } => internal_gradient(a, b, z),
        }
    }
}

/// Internal basis of degree `m`; empty spaces are an error.
pub fn internal_basis(m: usize) -> Result<Vec<ShapeFn>> {
    if m < 3 {
        return Err(Error::EmptySpace(format!(
            "internal space of degree {m} is empty"
        )));
    }
    Ok(internal_exponents(m)
        .into_iter()
        .map(|(a, b)| ShapeFn::Internal { a, b })
        .collect())
}

/// Value of a linear combination of shape functions.
pub fn eval_combination(basis: &[ShapeFn], coeffs: &[f64], z: RefPoint) -> f64 {
    basis.iter().zip(coeffs).map(|(f, c)| c * f.eval(z)).sum()
}

pub fn gradient_combination(basis: &[ShapeFn], coeffs: &[f64], z: RefPoint) -> [f64; 2] {
    basis.iter().zip(coeffs).fold([0.0; 2], |acc, (f, c)| {
        let g = f.gradient(z);
        [acc[0] + c * g[0], acc[1] + c * g[1]]
    })
}

/// Barycentric lattice with `n` subdivisions per side, (n+1)(n+2)/2 points.
pub fn barycentric_grid(n: usize) -> Vec<RefPoint> {
    let mut pts = Vec::with_capacity((n + 1) * (n + 2) / 2);
    for j in 0..=n {
        for i in 0..=(n - j) {
            let l1 = i as f64 / n as f64;
            let l2 = j as f64 / n as f64;
            pts.push(RefPoint::from_barycentric([1.0 - l1 - l2, l1, l2]));
        }
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_interior(rng: &mut impl Rng) -> RefPoint {
        let (mut a, mut b): (f64, f64) = (rng.gen(), rng.gen());
        if a + b > 1.0 {
            a = 1.0 - a;
            b = 1.0 - b;
        }
        RefPoint::from_barycentric([1.0 - a - b, a, b])
    }

    #[test]
    fn nodal_values() {
        let v = RefPoint::VERTICES;
        assert_eq!(nodal(0, v[0]), 1.0);
        assert_eq!(nodal(0, v[1]), 0.0);
        assert!(nodal(0, v[2]).abs() < 1e-16);
        assert!((nodal(2, RefPoint::CENTROID) - 1.0 / 3.0).abs() < 1e-15);
        for i in 0..3 {
            for k in 0..3 {
                let expect = if i == k { 1.0 } else { 0.0 };
                assert!((nodal(i, v[k]) - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn side_values() {
        let v = RefPoint::VERTICES;
        assert_eq!(side(2, 2, v[0]), 0.0);
        assert_eq!(side(2, 2, v[1]), 0.0);
        assert!((side(2, 2, RefPoint::new(0.0, 0.0)) - 0.25).abs() < 1e-15);
        assert_eq!(side(2, 3, RefPoint::new(0.0, 0.0)), 0.0);
        // Restriction to the face is (1 - t^2)/4 * t^(j-2).
        for f in 0..3 {
            for j in 2..=6 {
                for t in [-0.7f64, -0.1, 0.3, 0.9] {
                    let expect = (1.0 - t * t) / 4.0 * t.powi(j as i32 - 2);
                    assert!((side(f, j, RefPoint::on_face(f, t)) - expect).abs() < 1e-15);
                    // Vanishes on the other faces.
                    assert!(side(f, j, RefPoint::on_face((f + 1) % 3, t)).abs() < 1e-15);
                    assert!(side(f, j, RefPoint::on_face((f + 2) % 3, t)).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn internal_basis_cases() {
        let b3 = internal_basis(3).unwrap();
        assert_eq!(b3.len(), 1);
        assert!((b3[0].eval(RefPoint::CENTROID) - 1.0 / 27.0).abs() < 1e-16);
        assert_eq!(internal_basis(4).unwrap().len(), 3);
        assert_eq!(
            internal_exponents(5),
            vec![(0, 0), (0, 1), (1, 0), (0, 2), (1, 1), (2, 0)]
        );
        assert!(matches!(internal_basis(2), Err(Error::EmptySpace(_))));
        let b5 = internal_basis(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let z = RefPoint::on_face(rng.gen_range(0..3), rng.gen_range(-1.0..1.0));
            for f in &b5 {
                assert!(f.eval(z).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn dimensions() {
        assert_eq!(DegreeSignature::new(3, [3, 3, 3]).unwrap().space_dim(), 10);
        assert_eq!(DegreeSignature::new(2, [2, 2, 2]).unwrap().space_dim(), 6);
        let sig = DegreeSignature::new(4, [4, 2, 3]).unwrap();
        assert_eq!(sig.space_dim(), 12);
        assert_eq!(sig.basis().len(), 12);
        assert!(DegreeSignature::new(1, [1, 1, 1]).is_err());
        assert!(DegreeSignature::new(3, [4, 1, 1]).is_err());
        assert!(DegreeSignature::new(3, [0, 1, 1]).is_err());
    }

    #[test]
    fn rank_matches_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for sig in [
            DegreeSignature::new(4, [4, 2, 3]).unwrap(),
            DegreeSignature::new(6, [6, 1, 4]).unwrap(),
            DegreeSignature::uniform(8).unwrap(),
        ] {
            for _ in 0..20 {
                let basis = sig.basis();
                let n = basis.len();
                let pts: Vec<RefPoint> = (0..n).map(|_| random_interior(&mut rng)).collect();
                let v = nalgebra::DMatrix::from_fn(n, n, |i, j| basis[j].eval(pts[i]));
                let sv = v.singular_values();
                let cond = sv.max() / sv.min();
                assert!(cond.is_finite() && sv.min() > 0.0, "{sig:?}: cond {cond}");
            }
        }
    }

    #[test]
    fn gradients() {
        assert_eq!(nodal_gradient(2), [0.0, 1.0 / SQRT3]);
        let g = bubble_gradient(RefPoint::CENTROID);
        assert!(g[0].abs() < 1e-16 && g[1].abs() < 1e-16);

        let sig = DegreeSignature::uniform(5).unwrap();
        let basis = sig.basis();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-6;
        for _ in 0..20 {
            let c: Vec<f64> = (0..basis.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let z = random_interior(&mut rng);
            let g = gradient_combination(&basis, &c, z);
            let f = |x: f64, y: f64| eval_combination(&basis, &c, RefPoint::new(x, y));
            let fd = [
                (f(z.x + h, z.y) - f(z.x - h, z.y)) / (2.0 * h),
                (f(z.x, z.y + h) - f(z.x, z.y - h)) / (2.0 * h),
            ];
            let scale = g[0].hypot(g[1]).max(1.0);
            assert!((g[0] - fd[0]).abs() / scale < 1e-6);
            assert!((g[1] - fd[1]).abs() / scale < 1e-6);
        }
    }

    #[test]
    fn barycentric_grid_count() {
        let g = barycentric_grid(10);
        assert_eq!(g.len(), 66);
        assert!(g.iter().all(|p| p.min_barycentric() > -1e-15));
    }

    proptest! {
        #[test]
        fn partition_of_unity(a in 0.0..1.0f64, b in 0.0..1.0f64) {
            let (a, b) = if a + b > 1.0 { (1.0 - a, 1.0 - b) } else { (a, b) };
            let z = RefPoint::from_barycentric([1.0 - a - b, a, b]);
            let s = nodal(0, z) + nodal(1, z) + nodal(2, z);
            prop_assert!((s - 1.0).abs() < 1e-14);
        }

        #[test]
        fn trace_depends_only_on_face_data(
            f in 0usize..3,
            t in -1.0..1.0f64,
            seed in any::<u64>(),
        ) {
            let sig = DegreeSignature::new(6, [5, 4, 6]).unwrap();
            let basis = sig.basis();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c: Vec<f64> = (0..basis.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            // Zero every coefficient that should not influence the face trace.
            let masked: Vec<f64> = basis
                .iter()
                .zip(&c)
                .map(|(s, &v)| match *s {
                    ShapeFn::Nodal(i) if i != f => v,
                    ShapeFn::Side { face, .. } if face == f => v,
                    _ => 0.0,
                })
                .collect();
            let z = RefPoint::on_face(f, t);
            let full = eval_combination(&basis, &c, z);
            let part = eval_combination(&basis, &masked, z);
            prop_assert!((full - part).abs() < 1e-13);
        }
    }
}
