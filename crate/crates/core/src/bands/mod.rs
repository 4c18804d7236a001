//! Band providers: the first L eigenvalues λ_1 <= ... <= λ_L at a wave
//! vector, with ω_q = sqrt(λ_q) and its gradient where it exists.

pub mod fem;
pub mod synthetic;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mesh::{barycentric, WaveVector};

pub use fem::{plane_wave_eigenvalues, Diagonals, FemBands, FemConfig, Lattice, Mode, UnitCell};
pub use synthetic::{MatrixFamily, SyntheticBands, SyntheticModel};

/// Everything a provider knows at one wave vector.
#[derive(Clone, Debug, PartialEq)]
pub struct BandSample {
    pub lambda: Vec<f64>,
    pub omega: Vec<f64>,
    /// ∇ω_q, or `None` where ω_q is not differentiable (crossings, ω = 0,
    /// declared singular points).
    pub grad_omega: Vec<Option<[f64; 2]>>,
}

impl BandSample {
    pub fn from_lambda(lambda: Vec<f64>, grad_omega: Vec<Option<[f64; 2]>>) -> Self {
        let omega = lambda.iter().map(|&l| l.max(0.0).sqrt()).collect();
        Self {
            lambda,
            omega,
            grad_omega,
        }
    }
}

/// Exactly known non-smooth set: isolated points and straight lines given
/// by a point and a direction.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SingularSet {
    pub points: Vec<WaveVector>,
    pub lines: Vec<(WaveVector, WaveVector)>,
}

impl SingularSet {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty() && self.lines.is_empty()
    }

    fn line_distance(p: WaveVector, dir: WaveVector, k: WaveVector) -> f64 {
        let d = k - p;
        (d.k1 * dir.k2 - d.k2 * dir.k1) / dir.norm()
    }

    pub fn contains(&self, k: WaveVector, tol: f64) -> bool {
        self.points.iter().any(|p| p.dist(k) <= tol)
            || self
                .lines
                .iter()
                .any(|&(p, d)| Self::line_distance(p, d, k).abs() <= tol)
    }

    /// Whether the closed triangle meets the set.
    pub fn intersects_triangle(&self, tri: &[WaveVector; 3]) -> bool {
        const TOL: f64 = 1e-12;
        let scale = tri.iter().map(|p| p.norm()).fold(1.0, f64::max);
        self.points
            .iter()
            .any(|&p| barycentric(tri, p).iter().all(|&l| l >= -TOL))
            || self.lines.iter().any(|&(p, d)| {
                let s = tri.map(|v| Self::line_distance(p, d, v));
                let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                lo <= TOL * scale && hi >= -TOL * scale
            })
    }
}

pub trait BandProvider: Send + Sync {
    /// L, the number of eigenvalues returned at every wave vector.
    fn num_bands(&self) -> usize;

    /// λ_1..λ_L, ascending and non-negative.
    fn eigenvalues(&self, k: WaveVector) -> Result<Vec<f64>>;

    /// Eigenvalues with frequencies and frequency gradients.
    fn sample(&self, k: WaveVector) -> Result<BandSample>;

    fn singular_set(&self) -> SingularSet;

    fn omega(&self, k: WaveVector) -> Result<Vec<f64>> {
        Ok(self
            .eigenvalues(k)?
            .into_iter()
            .map(|l| l.max(0.0).sqrt())
            .collect())
    }
}

impl<P: BandProvider + ?Sized> BandProvider for Box<P> {
    fn num_bands(&self) -> usize {
        (**self).num_bands()
    }
    fn eigenvalues(&self, k: WaveVector) -> Result<Vec<f64>> {
        (**self).eigenvalues(k)
    }
    fn sample(&self, k: WaveVector) -> Result<BandSample> {
        (**self).sample(k)
    }
    fn singular_set(&self) -> SingularSet {
        (**self).singular_set()
    }
}

/// Provider selection for configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum ProviderConfig {
    Synthetic {
        model: SyntheticModel,
        bands: usize,
    },
    Fem(FemConfig),
}

impl ProviderConfig {
    pub fn build(&self) -> Result<Box<dyn BandProvider>> {
        Ok(match self {
            ProviderConfig::Synthetic { model, bands } => Box::new(model.build(*bands)?),
            ProviderConfig::Fem(cfg) => Box::new(FemBands::new(cfg.clone())?),
        })
    }
}
