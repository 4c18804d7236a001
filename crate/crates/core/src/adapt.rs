//! Adaptive driver: gap indicator, marking, the refinement loop, degree
//! design and the end-to-end sampling pipeline.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bands::{BandProvider, BandSample};
use crate::error::{Error, Result};
use crate::interp::{global_interpolate_bands, GlobalInterpolant};
use crate::mesh::{face_key, FaceKey, ParamMesh, WaveVector};
use crate::refbasis::{internal_dim, DegreeSignature};
use crate::MAX_DEGREE;

fn square_ibz() -> [WaveVector; 3] {
    let pi = std::f64::consts::PI;
    [
        WaveVector::new(0.0, 0.0),
        WaveVector::new(pi, 0.0),
        WaveVector::new(pi, pi),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct AdaptConfig {
    /// Bands considered; λ_1..λ_{L-1} are interpolated.
    #[serde(rename = "L")]
    pub num_bands: usize,
    pub kappa: f64,
    pub mu: f64,
    /// Smallest element diameter that may still be marked.
    pub tol2: f64,
    pub n_max: usize,
    pub domain: [WaveVector; 3],
    /// Upper bound on h_T / ρ_T checked after every refinement.
    pub shape_bound: f64,
    /// Red refinement levels of the initial mesh; by default the smallest
    /// level with h_1 <= diam(domain) / L.
    pub initial_levels: Option<u32>,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            num_bands: 3,
            kappa: 2.0 * std::f64::consts::SQRT_2,
            mu: 1.0,
            tol2: 1e-3,
            n_max: 8,
            domain: square_ibz(),
            shape_bound: 10.0,
            initial_levels: None,
        }
    }
}

impl AdaptConfig {
    pub fn initial_levels(&self) -> u32 {
        self.initial_levels
            .unwrap_or_else(|| self.num_bands.max(1).next_power_of_two().trailing_zeros())
    }

    pub fn initial_mesh(&self) -> Result<ParamMesh> {
        ParamMesh::uniform(self.domain, self.initial_levels())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.into()));
        if self.num_bands < 2 {
            return bad("L must be >= 2");
        }
        if !(self.kappa >= 0.0) || !self.kappa.is_finite() {
            return bad("kappa must be finite and >= 0");
        }
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return bad("mu must be positive");
        }
        if !(self.tol2 > 0.0) {
            return bad("tol2 must be positive");
        }
        if self.n_max < 1 {
            return bad("nMax must be >= 1");
        }
        if !(self.shape_bound > 0.0) {
            return bad("shapeBound must be positive");
        }
        if self.kappa < 2.0 * std::f64::consts::SQRT_2 {
            log::warn!(
                "kappa = {} is below 2*sqrt(2); crossings may go unmarked",
                self.kappa
            );
        }
        Ok(())
    }
}

/// Element degrees n_T and face degrees m_F = min of incident n_T.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConformingDegrees {
    pub element: Vec<usize>,
    pub face: BTreeMap<FaceKey, usize>,
}

impl ConformingDegrees {
    pub fn from_element_degrees(mesh: &ParamMesh, element: Vec<usize>) -> Result<Self> {
        if element.len() != mesh.num_elements() {
            return Err(Error::InvalidInput(format!(
                "{} degrees for {} elements",
                element.len(),
                mesh.num_elements()
            )));
        }
        if let Some(&d) = element.iter().find(|&&d| !(2..=MAX_DEGREE).contains(&d)) {
            return Err(Error::InvalidInput(format!(
                "element degree {d} outside 2..={MAX_DEGREE}"
            )));
        }
        let face = mesh
            .faces()
            .iter()
            .map(|(&key, inc)| (key, inc.iter().map(|&t| element[t]).min().unwrap_or(2)))
            .collect();
        Ok(Self { element, face })
    }

    pub fn face_degree(&self, key: FaceKey) -> Result<usize> {
        self.face
            .get(&key)
            .copied()
            .ok_or_else(|| Error::Conformity(format!("no degree for face {key:?}")))
    }

    /// Signature in the sorted-vertex frame: local face f joins the sorted
    /// vertices f+1 and f+2.
    pub fn signature(&self, mesh: &ParamMesh, id: usize) -> Result<DegreeSignature> {
        let mut s = mesh.element(id)?.vertices;
        s.sort_unstable();
        let faces = [
            self.face_degree(face_key(s[1], s[2]))?,
            self.face_degree(face_key(s[2], s[0]))?,
            self.face_degree(face_key(s[0], s[1]))?,
        ];
        DegreeSignature::new(self.element[id], faces)
    }

    /// dim V_n = #vertices + Σ_F (m_F - 1) + Σ_T (n_T - 1)(n_T - 2)/2.
    pub fn dimension(&self, mesh: &ParamMesh) -> usize {
        mesh.num_vertices()
            + self.face.values().map(|m| m - 1).sum::<usize>()
            + self.element.iter().map(|&n| internal_dim(n)).sum::<usize>()
    }

    pub fn check(&self, mesh: &ParamMesh) -> Result<()> {
        if self.element.len() != mesh.num_elements() || self.face.len() != mesh.faces().len() {
            return Err(Error::Conformity("degree table does not match mesh".into()));
        }
        for (key, inc) in mesh.faces() {
            let m = self.face_degree(*key)?;
            let min = inc.iter().map(|&t| self.element[t]).min().unwrap_or(0);
            if m != min {
                return Err(Error::Conformity(format!(
                    "face {key:?} has degree {m}, incident minimum is {min}"
                )));
            }
        }
        Ok(())
    }
}

/// η = min over adjacent band pairs and vertices of |ω_q - ω_{q+1}|.
/// Rows are vertices, columns bands.
pub fn indicator(vertex_bands: &[Vec<f64>]) -> Result<f64> {
    let mut eta = f64::INFINITY;
    for row in vertex_bands {
        if row.len() < 2 {
            return Err(Error::InvalidInput("indicator needs two bands".into()));
        }
        for w in row.windows(2) {
            let tol = 1e-12 * w[0].abs().max(w[1].abs()).max(1.0);
            if !(w[1] >= w[0] - tol) {
                return Err(Error::Unsorted);
            }
            eta = eta.min((w[1] - w[0]).abs());
        }
    }
    if eta.is_infinite() {
        return Err(Error::InvalidInput("indicator needs at least one vertex".into()));
    }
    Ok(eta)
}

/// κ h_T max |∇ω_q| over the supplied (non-singular) gradient magnitudes;
/// `None` when there are none.
pub fn tolerance1(h_t: f64, gradient_magnitudes: &[Vec<f64>], kappa: f64) -> Option<f64> {
    let max = gradient_magnitudes
        .iter()
        .flatten()
        .copied()
        .filter(|g| g.is_finite())
        .reduce(f64::max)?;
    Some(kappa * h_t * max)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ElementMark {
    pub eta: f64,
    pub tol1: f64,
    pub marked: bool,
    pub h: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarkReport {
    pub elements: Vec<ElementMark>,
    pub marked: BTreeSet<usize>,
}

/// Provider samples keyed by exact wave vector, shared across loops.
#[derive(Default)]
pub struct SampleCache {
    map: HashMap<(u64, u64), Arc<BandSample>>,
}

impl SampleCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Samples every point not yet cached, concurrently.
    pub fn fill(&mut self, provider: &dyn BandProvider, points: &[WaveVector]) -> Result<()> {
        let mut todo: Vec<WaveVector> = points
            .iter()
            .copied()
            .filter(|k| !self.map.contains_key(&k.bits()))
            .collect();
        todo.sort_by_key(|k| k.bits());
        todo.dedup_by_key(|k| k.bits());
        let fresh: Vec<(WaveVector, BandSample)> = todo
            .par_iter()
            .map(|&k| {
                provider
                    .sample(k)
                    .map(|s| (k, s))
                    .map_err(|e| Error::Provider {
                        k,
                        msg: e.to_string(),
                    })
            })
            .collect::<Result<_>>()?;
        for (k, s) in fresh {
            self.map.insert(k.bits(), Arc::new(s));
        }
        Ok(())
    }

    pub fn get(&self, k: WaveVector) -> Option<&Arc<BandSample>> {
        self.map.get(&k.bits())
    }
}

pub fn mark(mesh: &ParamMesh, provider: &dyn BandProvider, config: &AdaptConfig) -> Result<MarkReport> {
    mark_cached(mesh, provider, config, &mut SampleCache::new())
}

fn gradient_magnitudes(sample: &BandSample, bands: usize) -> Vec<f64> {
    sample
        .grad_omega
        .iter()
        .take(bands)
        .flatten()
        .map(|g| g[0].hypot(g[1]))
        .collect()
}

pub fn mark_cached(
    mesh: &ParamMesh,
    provider: &dyn BandProvider,
    config: &AdaptConfig,
    cache: &mut SampleCache,
) -> Result<MarkReport> {
    let l = config.num_bands;
    if provider.num_bands() < l {
        return Err(Error::InvalidInput(format!(
            "provider has {} bands, L = {l}",
            provider.num_bands()
        )));
    }
    let positions: Vec<WaveVector> = mesh.vertices().iter().map(|v| v.position).collect();
    cache.fill(provider, &positions)?;
    let singular = provider.singular_set();
    let is_singular = |k: WaveVector| singular.contains(k, 1e-12 * k.norm().max(1.0));

    let mut elements = Vec::with_capacity(mesh.num_elements());
    let mut fallback = Vec::new();
    for e in mesh.elements() {
        let pts = mesh.element_points(e.id)?;
        let samples: Vec<&Arc<BandSample>> = pts
            .iter()
            .map(|&k| cache.get(k).ok_or(Error::Provider { k, msg: "not sampled".into() }))
            .collect::<Result<_>>()?;
        let bands: Vec<Vec<f64>> = samples.iter().map(|s| s.omega[..l].to_vec()).collect();
        let eta = indicator(&bands)?;
        let grads: Vec<Vec<f64>> = pts
            .iter()
            .zip(&samples)
            .filter(|(k, _)| !is_singular(**k))
            .map(|(_, s)| gradient_magnitudes(s, l))
            .collect();
        let h = mesh.diameter(e.id)?;
        let tol1 = match tolerance1(h, &grads, config.kappa) {
            Some(t) => t,
            None => {
                fallback.push(e.id);
                f64::NAN
            }
        };
        elements.push(ElementMark {
            eta,
            tol1,
            marked: false,
            h,
        });
    }

    if !fallback.is_empty() {
        let mids: Vec<(usize, [WaveVector; 3])> = fallback
            .iter()
            .map(|&id| {
                let p = mesh.element_points(id)?;
                Ok((id, std::array::from_fn(|i| (p[(i + 1) % 3] + p[(i + 2) % 3]) * 0.5)))
            })
            .collect::<Result<_>>()?;
        let all: Vec<WaveVector> = mids.iter().flat_map(|(_, m)| m.iter().copied()).collect();
        cache.fill(provider, &all)?;
        for (id, m) in mids {
            let grads: Vec<Vec<f64>> = m
                .iter()
                .filter(|&&k| !is_singular(k))
                .filter_map(|&k| cache.get(k))
                .map(|s| gradient_magnitudes(s, l))
                .collect();
            let h = elements[id].h;
            // With no usable gradient at all the element is refined.
            elements[id].tol1 = tolerance1(h, &grads, config.kappa).unwrap_or(if config.kappa > 0.0 {
                f64::INFINITY
            } else {
                0.0
            });
        }
    }

    let mut marked = BTreeSet::new();
    for (id, m) in elements.iter_mut().enumerate() {
        m.marked = m.eta <= m.tol1 && m.h >= config.tol2;
        if m.marked {
            marked.insert(id);
        }
    }
    Ok(MarkReport { elements, marked })
}

/// n_T = 2 on marked elements, max(2, ⌈μ ℓ_T⌉) elsewhere, capped at the
/// highest supported degree.
pub fn element_degree(layer: i64, marked: bool, mu: f64) -> usize {
    if marked {
        return 2;
    }
    let d = (mu * layer as f64 - 1e-12).ceil();
    (d.max(2.0) as usize).min(MAX_DEGREE)
}

pub fn assign_degrees(mesh: &ParamMesh, report: &MarkReport, mu: f64) -> Result<ConformingDegrees> {
    if report.elements.len() != mesh.num_elements() {
        return Err(Error::InvalidInput("mark report does not match mesh".into()));
    }
    let degrees = (0..mesh.num_elements())
        .map(|id| Ok(element_degree(mesh.layer_of(id)?, report.marked.contains(&id), mu)))
        .collect::<Result<Vec<_>>>()?;
    ConformingDegrees::from_element_degrees(mesh, degrees)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LoopRow {
    #[serde(rename = "loop")]
    pub loop_index: usize,
    pub n_elems: usize,
    pub n_marked: usize,
    pub h_min: f64,
    #[serde(rename = "N")]
    pub n: usize,
}

pub fn loop_log_csv(rows: &[LoopRow]) -> String {
    let mut s = String::from("loop,nElems,nMarked,hMin,N\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{:.17e},{}\n",
            r.loop_index, r.n_elems, r.n_marked, r.h_min, r.n
        ));
    }
    s
}

/// Mesh T_n with its marking M_n and degree design.
#[derive(Clone, Debug)]
pub struct LoopState {
    pub mesh: Arc<ParamMesh>,
    pub report: MarkReport,
    pub degrees: ConformingDegrees,
}

#[derive(Clone, Debug)]
pub struct AdaptRun {
    pub config: AdaptConfig,
    /// One state per executed loop; loop n has generation n.
    pub states: Vec<LoopState>,
    pub log: Vec<LoopRow>,
}

impl AdaptRun {
    /// State after `loops` loops. Once marking comes back empty the mesh
    /// stays fixed while the generation keeps counting, so layers (and
    /// degrees) still grow.
    pub fn state_at(&self, loops: usize) -> Result<LoopState> {
        if loops == 0 || loops > self.config.n_max {
            return Err(Error::InvalidInput(format!(
                "loop {loops} outside 1..={}",
                self.config.n_max
            )));
        }
        if let Some(s) = self.states.get(loops - 1) {
            return Ok(s.clone());
        }
        let last = self.states.last().ok_or_else(|| Error::InvalidInput("empty run".into()))?;
        let mesh = last.mesh.with_generation(loops as u32);
        let degrees = assign_degrees(&mesh, &last.report, self.config.mu)?;
        Ok(LoopState {
            mesh: Arc::new(mesh),
            report: last.report.clone(),
            degrees,
        })
    }

    pub fn final_state(&self) -> Result<LoopState> {
        self.state_at(self.config.n_max)
    }
}

/// Mark, refine, repeat: nMax markings, at most nMax - 1 refinements.
pub fn adapt_mesh(provider: &dyn BandProvider, config: &AdaptConfig) -> Result<AdaptRun> {
    config.validate()?;
    let mut mesh = config.initial_mesh()?;
    let mut cache = SampleCache::new();
    let mut states = Vec::new();
    let mut log = Vec::new();
    for n in 1..=config.n_max {
        let report = mark_cached(&mesh, provider, config, &mut cache)?;
        let degrees = assign_degrees(&mesh, &report, config.mu)?;
        log.push(LoopRow {
            loop_index: n,
            n_elems: mesh.num_elements(),
            n_marked: report.marked.len(),
            h_min: mesh.min_diameter(),
            n: degrees.dimension(&mesh),
        });
        log::info!(
            "loop {n}: {} elements, {} marked",
            mesh.num_elements(),
            report.marked.len()
        );
        let done = n == config.n_max || report.marked.is_empty();
        let next = if done {
            None
        } else {
            let refined = mesh.refine_marked(&report.marked)?;
            let ratio = refined.max_shape_ratio();
            if ratio > config.shape_bound {
                return Err(Error::Discretization(format!(
                    "shape ratio {ratio} exceeds bound {}",
                    config.shape_bound
                )));
            }
            Some(refined)
        };
        states.push(LoopState {
            mesh: Arc::new(mesh),
            report,
            degrees,
        });
        match next {
            Some(m) => mesh = m,
            None => break,
        }
    }
    Ok(AdaptRun {
        config: config.clone(),
        states,
        log,
    })
}

/// Interpolants of λ_1..λ_{L-1} on a loop state.
pub fn interpolate_state(
    provider: &dyn BandProvider,
    state: &LoopState,
    num_bands: usize,
) -> Result<Vec<GlobalInterpolant>> {
    global_interpolate_bands(provider, state.mesh.clone(), &state.degrees, 0..num_bands - 1)
}

#[derive(Clone, Debug)]
pub struct HpRun {
    pub adapt: AdaptRun,
    pub state: LoopState,
    /// λ_j interpolants, j = 1..L-1; frequencies via `band_value`.
    pub interpolants: Vec<GlobalInterpolant>,
    /// Number of sampling points, the dimension of the conforming space.
    pub n: usize,
}

pub fn run_hp(provider: &dyn BandProvider, config: &AdaptConfig) -> Result<HpRun> {
    let adapt = adapt_mesh(provider, config)?;
    let state = adapt.final_state()?;
    let interpolants = interpolate_state(provider, &state, config.num_bands)?;
    let n = state.degrees.dimension(&state.mesh);
    Ok(HpRun {
        adapt,
        state,
        interpolants,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bands::SyntheticModel;
    use proptest::prelude::*;

    fn unit_config(n_max: usize) -> AdaptConfig {
        AdaptConfig {
            n_max,
            ..AdaptConfig::default()
        }
    }

    #[test]
    fn indicator_examples() {
        // ω = ((k1 + k2) ± |k1 - k2|) / 2 at (0,0), (1,0), (1,1).
        let v = |a: f64, b: f64| vec![a.min(b), a.max(b)];
        let rows = vec![v(0.0, 0.0), v(1.0, 0.0), v(1.0, 1.0)];
        assert_eq!(indicator(&rows).unwrap(), 0.0);
        let rows = vec![vec![0.0, 0.5, 1.5, 2.0, 3.0]; 3];
        assert_eq!(indicator(&rows).unwrap(), 0.5);
        assert_eq!(indicator(&vec![vec![1.0, 1.0]; 3]).unwrap(), 0.0);
        assert!(matches!(indicator(&[vec![2.0, 1.0]]), Err(Error::Unsorted)));
    }

    #[test]
    fn tolerance_examples() {
        let t = tolerance1(2f64.sqrt(), &[vec![1.0, 0.5], vec![0.2]], 2.0 * 2f64.sqrt()).unwrap();
        assert!((t - 4.0).abs() < 1e-14);
        assert_eq!(tolerance1(1.0, &[vec![3.0]], 0.0), Some(0.0));
        assert_eq!(tolerance1(1.0, &[], 1.0), None);
    }

    #[test]
    fn degree_design() {
        assert_eq!(element_degree(4, false, 1.0), 4);
        assert_eq!(element_degree(4, false, 0.5), 2);
        assert_eq!(element_degree(5, false, 0.5), 3);
        assert_eq!(element_degree(4, true, 1.0), 2);
        assert_eq!(element_degree(40, false, 1.0), MAX_DEGREE);
        assert_eq!(element_degree(1, false, 1.0), 2);
    }

    #[test]
    fn face_degree_is_minimum() {
        let mesh = ParamMesh::uniform(square_ibz(), 1).unwrap();
        let mut d = vec![4; mesh.num_elements()];
        // Element 3 is the centre triangle in a red refinement; any element
        // sharing an interior face works.
        let (key, inc) = mesh.faces().iter().find(|(_, inc)| inc.len() == 2).unwrap();
        d[inc[0]] = 2;
        let cd = ConformingDegrees::from_element_degrees(&mesh, d.clone()).unwrap();
        assert_eq!(cd.face_degree(*key).unwrap(), 2);
        cd.check(&mesh).unwrap();
        for id in 0..mesh.num_elements() {
            let sig = cd.signature(&mesh, id).unwrap();
            assert!(sig.faces.iter().all(|&m| m <= sig.m));
        }
        // #V + Σ(m_F - 1) + Σ internal.
        let expect = mesh.num_vertices()
            + cd.face.values().map(|m| m - 1).sum::<usize>()
            + d.iter().map(|&n| (n - 1) * (n - 2) / 2).sum::<usize>();
        assert_eq!(cd.dimension(&mesh), expect);
        assert!(ConformingDegrees::from_element_degrees(&mesh, vec![1; 4]).is_err());
    }

    #[test]
    fn unit_slope_tolerance_from_provider() {
        let p = SyntheticModel::crossing_line().build(3).unwrap();
        let mesh = ParamMesh::uniform(square_ibz(), 1).unwrap();
        let cfg = unit_config(1);
        let r = mark(&mesh, &p, &cfg).unwrap();
        for (id, m) in r.elements.iter().enumerate() {
            // Both crossing bands have unit slope; the far bands are flatter.
            let expect = cfg.kappa * mesh.diameter(id).unwrap();
            assert!((m.tol1 - expect).abs() < 1e-12, "{} vs {expect}", m.tol1);
        }
    }

    #[test]
    fn wide_gaps_mark_nothing() {
        let p = SyntheticModel::Affine {
            offsets: vec![1.0, 200.0, 400.0],
            slopes: vec![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        }
        .build(3)
        .unwrap();
        let cfg = unit_config(5);
        let run = adapt_mesh(&p, &cfg).unwrap();
        assert_eq!(run.log.len(), 1);
        assert_eq!(run.log[0].n_marked, 0);
        let fin = run.final_state().unwrap();
        assert_eq!(fin.mesh.generation(), 5);
        assert_eq!(fin.mesh.num_elements(), run.states[0].mesh.num_elements());
        // Layers kept growing: every unmarked element reaches degree 5.
        assert!(fin.degrees.element.iter().all(|&d| d == 5));
    }

    #[test]
    fn tol2_guard_blocks_marking() {
        let p = SyntheticModel::crossing_line().build(3).unwrap();
        let cfg = AdaptConfig {
            tol2: 100.0,
            ..unit_config(3)
        };
        let mesh = ParamMesh::uniform(cfg.domain, 1).unwrap();
        let r = mark(&mesh, &p, &cfg).unwrap();
        assert!(r.marked.is_empty());
        assert!(r.elements.iter().any(|m| m.eta <= m.tol1));
    }

    #[test]
    fn crossing_elements_are_marked_every_loop() {
        let p = SyntheticModel::crossing_line().build(3).unwrap();
        let run = adapt_mesh(&p, &unit_config(6)).unwrap();
        let s = p.singular_set();
        for st in &run.states {
            for id in 0..st.mesh.num_elements() {
                if s.intersects_triangle(&st.mesh.element_points(id).unwrap()) {
                    assert!(st.report.marked.contains(&id));
                }
            }
            for (id, m) in st.report.elements.iter().enumerate() {
                assert_eq!(m.marked, m.eta <= m.tol1 && m.h >= 1e-3);
                assert_eq!(m.marked, st.report.marked.contains(&id));
            }
            st.degrees.check(&st.mesh).unwrap();
        }
        assert_eq!(run.log.len(), 6);
    }

    #[test]
    fn gamma_vertex_uses_remaining_gradients() {
        // The FEM provider treats Γ as singular; with a synthetic provider
        // declaring a singular point at a mesh vertex the other vertices
        // still supply tol1.
        let p = SyntheticModel::Conical {
            shift: 10.0,
            apex: WaveVector::new(0.0, 0.0),
        }
        .build(3)
        .unwrap();
        let mesh = ParamMesh::uniform(square_ibz(), 0).unwrap();
        let r = mark(&mesh, &p, &unit_config(1)).unwrap();
        assert!(r.elements[0].tol1.is_finite());
        assert!(r.marked.contains(&0));
    }

    #[test]
    fn loops_are_deterministic() {
        let p = SyntheticModel::crossing_point().build(3).unwrap();
        let a = adapt_mesh(&p, &unit_config(5)).unwrap();
        let b = adapt_mesh(&p, &unit_config(5)).unwrap();
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn nested_meshes() {
        let p = SyntheticModel::crossing_point().build(3).unwrap();
        let run = adapt_mesh(&p, &unit_config(4)).unwrap();
        for w in run.states.windows(2) {
            let (coarse, fine) = (&w[0].mesh, &w[1].mesh);
            for e in fine.elements() {
                let c = fine.element_points(e.id).unwrap();
                let centroid = (c[0] + c[1] + c[2]) * (1.0 / 3.0);
                let parent = coarse.locate(centroid).unwrap();
                let pp = coarse.element_points(parent).unwrap();
                for v in c {
                    let l = crate::mesh::barycentric(&pp, v);
                    assert!(l.iter().all(|&x| x >= -1e-12));
                }
            }
        }
    }

    #[test]
    fn affine_reproduction_end_to_end() {
        let p = SyntheticModel::Affine {
            offsets: vec![1.0, 3.0, 9.0],
            slopes: vec![[0.3, 0.1], [0.2, 0.5], [0.0, 0.0]],
        }
        .build(3)
        .unwrap();
        let run = run_hp(&p, &unit_config(4)).unwrap();
        assert_eq!(run.interpolants.len(), 2);
        assert_eq!(run.n, run.interpolants[0].num_samples());
        for q in 0..2 {
            for k in [WaveVector::new(1.0, 0.5), WaveVector::new(3.0, 2.9)] {
                let exact = p.eigenvalues(k).unwrap()[q];
                assert!((run.interpolants[q].evaluate(k).unwrap() - exact).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn initial_mesh_size_follows_band_count() {
        for (l, lv) in [(2, 1), (3, 2), (4, 2), (6, 3)] {
            let cfg = AdaptConfig {
                num_bands: l,
                ..AdaptConfig::default()
            };
            assert_eq!(cfg.initial_levels(), lv);
            let mesh = cfg.initial_mesh().unwrap();
            let diam = (cfg.domain[0].dist(cfg.domain[2])).max(cfg.domain[0].dist(cfg.domain[1]));
            assert!(mesh.max_diameter() <= diam / l as f64 + 1e-12);
            assert!(mesh.max_diameter() * 2.0 > diam / l as f64);
        }
    }

    #[test]
    fn config_json() {
        let cfg: AdaptConfig =
            serde_json::from_str(r#"{"L":6,"kappa":3.0,"nMax":4,"tol2":0.01}"#).unwrap();
        assert_eq!(cfg.num_bands, 6);
        assert_eq!(cfg.n_max, 4);
        assert_eq!(cfg.mu, 1.0);
        assert!(AdaptConfig {
            num_bands: 1,
            ..cfg.clone()
        }
        .validate()
        .is_err());
        let csv = loop_log_csv(&[LoopRow {
            loop_index: 1,
            n_elems: 4,
            n_marked: 1,
            h_min: 0.5,
            n: 15,
        }]);
        assert!(csv.starts_with("loop,nElems,nMarked,hMin,N\n1,4,1,"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn face_degrees_bounded_by_element(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut mesh = ParamMesh::uniform(square_ibz(), 1).unwrap();
            for _ in 0..3 {
                let pick: BTreeSet<usize> = (0..mesh.num_elements()).filter(|_| rng.gen_bool(0.3)).collect();
                mesh = mesh.refine_marked(&pick).unwrap();
            }
            let d: Vec<usize> = (0..mesh.num_elements()).map(|_| rng.gen_range(2..=MAX_DEGREE)).collect();
            let cd = ConformingDegrees::from_element_degrees(&mesh, d).unwrap();
            for id in 0..mesh.num_elements() {
                let sig = cd.signature(&mesh, id).unwrap();
                prop_assert!(sig.faces.iter().all(|&m| m <= sig.m));
            }
        }
    }
}
