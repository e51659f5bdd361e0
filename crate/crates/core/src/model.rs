//! Layered-network parameterization and parameter schedules.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::assumptions::AssumptionId;
use crate::error::ModelError;
use crate::linalg::DenseMatrix;

/// Counts of individuals, resources and viruses plus the sampling step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemShape {
    pub n: usize,
    pub q: usize,
    pub m: usize,
    pub h: f64,
}

impl SystemShape {
    pub fn new(n: usize, q: usize, m: usize, h: f64) -> Result<Self, ModelError> {
        let shape = Self { n, q, m, h };
        shape.validate()?;
        Ok(shape)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n == 0 {
            return Err(ModelError::Shape("n must be at least 1"));
        }
        if self.m == 0 {
            return Err(ModelError::Shape("m must be at least 1"));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(ModelError::Shape("h must be positive and finite"));
        }
        Ok(())
    }

    /// Size of the stacked state `z = [x; w]` of one virus.
    #[inline]
    pub fn dim(&self) -> usize {
        self.n + self.q
    }
}

/// Raw per-virus frame as it appears in config files. Matrices are stored
/// row-major; `c_w` is q×n (resource j, individual l) and `alpha_w` holds
/// the transfer rate from resource j to resource l at `(j, l)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameData {
    pub beta: Vec<f64>,
    pub delta: Vec<f64>,
    pub adjacency: DenseMatrix,
    pub beta_w: DenseMatrix,
    pub c_w: DenseMatrix,
    pub alpha_w: DenseMatrix,
    pub delta_w: Vec<f64>,
    pub w_max: f64,
}

/// Rates of one virus at one time instant.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VirusLayerParams {
    beta: Vec<f64>,
    delta: Vec<f64>,
    adjacency: DenseMatrix,
    beta_w: DenseMatrix,
    c_w: DenseMatrix,
    alpha_w: DenseMatrix,
    delta_w: Vec<f64>,
    w_max: f64,
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<(), ModelError> {
    if expected == found {
        Ok(())
    } else {
        Err(ModelError::Dimension { what, expected, found })
    }
}

fn check_matrix(what: &'static str, m: &DenseMatrix, rows: usize, cols: usize) -> Result<DenseMatrix, ModelError> {
    // An empty JSON array stands for any matrix with a zero dimension.
    if (rows == 0 || cols == 0) && m.as_slice().is_empty() {
        return Ok(DenseMatrix::zeros(rows, cols));
    }
    check_len(what, rows, m.rows())?;
    check_len(what, cols, m.cols())?;
    Ok(m.clone())
}

fn check_finite(what: &'static str, values: &[f64]) -> Result<(), ModelError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ModelError::NonFinite { what })
    }
}

impl VirusLayerParams {
    /// Validates dimensions, finiteness, and the rate and shedding
    /// assumptions; a violation names the assumption it breaks.
    pub fn new(data: FrameData, n: usize, q: usize) -> Result<Self, ModelError> {
        let params = Self::new_unvalidated(data, n, q)?;
        params.validate_rates()?;
        Ok(params)
    }

    /// Validates dimensions and finiteness only. Used when loading configs
    /// whose assumption violations should be reported rather than rejected.
    pub fn new_unvalidated(data: FrameData, n: usize, q: usize) -> Result<Self, ModelError> {
        check_len("beta", n, data.beta.len())?;
        check_len("delta", n, data.delta.len())?;
        check_len("delta_w", q, data.delta_w.len())?;
        let adjacency = check_matrix("adjacency", &data.adjacency, n, n)?;
        let beta_w = check_matrix("beta_w", &data.beta_w, n, q)?;
        let c_w = check_matrix("c_w", &data.c_w, q, n)?;
        let alpha_w = check_matrix("alpha_w", &data.alpha_w, q, q)?;
        check_finite("beta", &data.beta)?;
        check_finite("delta", &data.delta)?;
        check_finite("delta_w", &data.delta_w)?;
        check_finite("w_max", &[data.w_max])?;
        Ok(Self {
            beta: data.beta,
            delta: data.delta,
            adjacency,
            beta_w,
            c_w,
            alpha_w,
            delta_w: data.delta_w,
            w_max: data.w_max,
        })
    }

    fn validate_rates(&self) -> Result<(), ModelError> {
        let violation = |assumption, what, index, value| {
            Err(ModelError::Violation {
                assumption,
                what,
                index,
                value,
            })
        };
        let rates = AssumptionId::PositiveRates;
        for (what, values) in [
            ("beta", &self.beta[..]),
            ("adjacency", self.adjacency.as_slice()),
            ("beta_w", self.beta_w.as_slice()),
            ("c_w", self.c_w.as_slice()),
            ("alpha_w", self.alpha_w.as_slice()),
        ] {
            if let Some((i, &v)) = values.iter().enumerate().find(|(_, v)| **v < 0.0) {
                return violation(rates, what, i, v);
            }
        }
        if let Some((i, &v)) = self.delta.iter().enumerate().find(|(_, v)| **v <= 0.0) {
            return violation(rates, "delta", i, v);
        }
        if let Some((j, &v)) = self.delta_w.iter().enumerate().find(|(_, v)| **v <= 0.0) {
            return violation(rates, "delta_w", j, v);
        }
        for j in 0..self.q() {
            if !self.c_w.row(j).iter().any(|&c| c > 0.0) {
                return violation(rates, "c_w row (no shedding into resource)", j, 0.0);
            }
        }
        if self.w_max <= 0.0 {
            return violation(AssumptionId::SheddingRatio, "w_max", 0, self.w_max);
        }
        for j in 0..self.q() {
            let ratio = self.shedding_ratio(j);
            if ratio > self.w_max {
                return violation(AssumptionId::SheddingRatio, "shedding ratio", j, ratio);
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.beta.len()
    }

    pub fn q(&self) -> usize {
        self.delta_w.len()
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn adjacency(&self) -> &DenseMatrix {
        &self.adjacency
    }

    pub fn beta_w(&self) -> &DenseMatrix {
        &self.beta_w
    }

    pub fn c_w(&self) -> &DenseMatrix {
        &self.c_w
    }

    pub fn alpha_w(&self) -> &DenseMatrix {
        &self.alpha_w
    }

    pub fn delta_w(&self) -> &[f64] {
        &self.delta_w
    }

    pub fn w_max(&self) -> f64 {
        self.w_max
    }

    /// Individual-to-individual infection rate `β_i · a_ij`.
    #[inline]
    pub fn infection_rate(&self, i: usize, j: usize) -> f64 {
        self.beta[i] * self.adjacency[(i, j)]
    }

    /// Matrix `B = [β_i a_ij]`.
    pub fn infection_matrix(&self) -> DenseMatrix {
        let n = self.n();
        let mut b = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                b[(i, j)] = self.infection_rate(i, j);
            }
        }
        b
    }

    /// Total transfer rate out of resource `j` (self-transfers excluded).
    pub fn outflow(&self, j: usize) -> f64 {
        (0..self.q()).filter(|&l| l != j).map(|l| self.alpha_w[(j, l)]).sum()
    }

    /// Total transfer rate into resource `j` (self-transfers excluded).
    pub fn inflow(&self, j: usize) -> f64 {
        (0..self.q()).filter(|&l| l != j).map(|l| self.alpha_w[(l, j)]).sum()
    }

    /// `Σ_l c_jl / δ_j^w`.
    pub fn shedding_ratio(&self, j: usize) -> f64 {
        self.c_w.row(j).iter().sum::<f64>() / self.delta_w[j]
    }

    /// Smallest `w_max` compatible with the shedding-ratio bound.
    pub fn required_w_max(&self) -> f64 {
        (0..self.q()).map(|j| self.shedding_ratio(j)).fold(0.0, f64::max)
    }

    /// `Σ_p β_ip + w_max · Σ_p β^w_ip`: the row contribution of this virus
    /// to the cross-virus step budget.
    pub fn infection_row_budget(&self, i: usize) -> f64 {
        let contact: f64 = (0..self.n()).map(|p| self.infection_rate(i, p)).sum();
        let exposure: f64 = self.beta_w.row(i).iter().sum();
        contact + exposure * self.w_max
    }

    pub fn to_data(&self) -> FrameData {
        FrameData {
            beta: self.beta.clone(),
            delta: self.delta.clone(),
            adjacency: self.adjacency.clone(),
            beta_w: self.beta_w.clone(),
            c_w: self.c_w.clone(),
            alpha_w: self.alpha_w.clone(),
            delta_w: self.delta_w.clone(),
            w_max: self.w_max,
        }
    }
}

/// Directed edge `(source, target)` between two vertices of one layer.
pub type Edge = (usize, usize);

/// Edge sets of one layer. Every pair follows the set-builder convention:
/// `population` holds `(i, j)` with `a_ji > 0`, `transfers` `(l, j)` with
/// `α_lj > 0` and `l ≠ j`, `shedding` `(j, l)` with `c_jl > 0` (resource `j`,
/// individual `l`), `exposure` `(i, j)` with `β^w_ij > 0` (individual `i`,
/// resource `j`). Indices are 0-based within their own vertex class.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectiveGraph {
    pub population: Vec<Edge>,
    pub transfers: Vec<Edge>,
    pub shedding: Vec<Edge>,
    pub exposure: Vec<Edge>,
}

impl EffectiveGraph {
    /// The union as directed `(source, target)` edges on `n + q` vertices,
    /// individuals first, then resources.
    pub fn union(&self, n: usize) -> Vec<Edge> {
        let mut edges: Vec<Edge> = Vec::with_capacity(
            self.population.len() + self.transfers.len() + self.shedding.len() + self.exposure.len(),
        );
        edges.extend(self.population.iter().copied());
        edges.extend(self.transfers.iter().map(|&(l, j)| (n + l, n + j)));
        edges.extend(self.shedding.iter().map(|&(j, l)| (l, n + j)));
        edges.extend(self.exposure.iter().map(|&(i, j)| (n + j, i)));
        edges.sort_unstable();
        edges.dedup();
        edges
    }
}

pub fn effective_graph(params: &VirusLayerParams) -> EffectiveGraph {
    let (n, q) = (params.n(), params.q());
    let mut g = EffectiveGraph::default();
    for i in 0..n {
        for j in 0..n {
            if params.adjacency[(j, i)] > 0.0 {
                g.population.push((i, j));
            }
        }
    }
    for l in 0..q {
        for j in 0..q {
            if l != j && params.alpha_w[(l, j)] > 0.0 {
                g.transfers.push((l, j));
            }
        }
    }
    for j in 0..q {
        for l in 0..n {
            if params.c_w[(j, l)] > 0.0 {
                g.shedding.push((j, l));
            }
        }
    }
    for i in 0..n {
        for j in 0..q {
            if params.beta_w[(i, j)] > 0.0 {
                g.exposure.push((i, j));
            }
        }
    }
    g
}

/// How one virus's frames are laid out in time.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleKind {
    Constant,
    /// `frames[i]` governs the instants `k ≡ first_instant + i (mod period)`.
    Periodic {
        first_instant: usize,
    },
    /// `frames[i]` governs `keys[i] ≤ k < keys[i + 1]`; the last frame is
    /// held forever. `keys` start at 0 and increase strictly.
    Explicit {
        keys: Vec<usize>,
    },
}

/// Time dependence of one virus's parameters.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VirusSchedule {
    kind: ScheduleKind,
    frames: Vec<VirusLayerParams>,
}

impl VirusSchedule {
    pub fn new(kind: ScheduleKind, frames: Vec<VirusLayerParams>) -> Result<Self, ModelError> {
        if frames.is_empty() {
            return Err(ModelError::Schedule("a schedule needs at least one frame"));
        }
        match &kind {
            ScheduleKind::Constant if frames.len() != 1 => {
                return Err(ModelError::Schedule("a constant schedule has exactly one frame"));
            }
            ScheduleKind::Explicit { keys } => {
                if keys.len() != frames.len() {
                    return Err(ModelError::Schedule("explicit schedule needs one key per frame"));
                }
                if keys[0] != 0 {
                    return Err(ModelError::Schedule("explicit schedule keys must start at 0"));
                }
                if keys.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(ModelError::Schedule("explicit schedule keys must increase strictly"));
                }
            }
            _ => {}
        }
        let (n, q) = (frames[0].n(), frames[0].q());
        if frames.iter().any(|f| f.n() != n || f.q() != q) {
            return Err(ModelError::Schedule("frames of one virus differ in dimension"));
        }
        Ok(Self { kind, frames })
    }

    pub fn constant(frame: VirusLayerParams) -> Self {
        Self {
            kind: ScheduleKind::Constant,
            frames: alloc::vec![frame],
        }
    }

    /// Period equal to the number of frames; `frames[0]` governs `k = 1`.
    pub fn periodic(frames: Vec<VirusLayerParams>) -> Result<Self, ModelError> {
        Self::new(ScheduleKind::Periodic { first_instant: 1 }, frames)
    }

    pub fn kind(&self) -> &ScheduleKind {
        &self.kind
    }

    pub fn frames(&self) -> &[VirusLayerParams] {
        &self.frames
    }

    /// Index into [`Self::frames`] of the frame governing `k → k + 1`.
    pub fn frame_index(&self, k: usize) -> usize {
        match &self.kind {
            ScheduleKind::Constant => 0,
            ScheduleKind::Periodic { first_instant } => {
                let p = self.frames.len();
                (k % p + p - first_instant % p) % p
            }
            ScheduleKind::Explicit { keys } => keys.partition_point(|&key| key <= k) - 1,
        }
    }

    pub fn frame(&self, k: usize) -> &VirusLayerParams {
        &self.frames[self.frame_index(k)]
    }

    /// Indices of the first occurrence of each distinct frame value.
    pub fn distinct_frames(&self) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for (i, f) in self.frames.iter().enumerate() {
            if !out.iter().any(|&j| self.frames[j] == *f) {
                out.push(i);
            }
        }
        out
    }

    /// True when every frame carries the same values.
    pub fn is_effectively_constant(&self) -> bool {
        self.frames.iter().all(|f| *f == self.frames[0])
    }

    /// Instants `0..cover` visit every frame and every frame transition.
    pub fn cover(&self) -> usize {
        match &self.kind {
            ScheduleKind::Constant => 1,
            ScheduleKind::Periodic { .. } => self.frames.len() + 1,
            ScheduleKind::Explicit { keys } => keys[keys.len() - 1] + 1,
        }
    }

    fn period(&self) -> usize {
        match self.kind {
            ScheduleKind::Periodic { .. } => self.frames.len(),
            _ => 1,
        }
    }

    fn last_key(&self) -> usize {
        match &self.kind {
            ScheduleKind::Explicit { keys } => keys[keys.len() - 1],
            _ => 0,
        }
    }
}

/// Per-virus parameter schedules over a common [`SystemShape`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParameterSchedule {
    shape: SystemShape,
    viruses: Vec<VirusSchedule>,
}

/// Hard cap on the instants enumerated to cover every joint frame tuple.
pub const MAX_JOINT_COVER: usize = 1 << 20;

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl ParameterSchedule {
    pub fn new(shape: SystemShape, viruses: Vec<VirusSchedule>) -> Result<Self, ModelError> {
        shape.validate()?;
        check_len("number of virus schedules", shape.m, viruses.len())?;
        for v in &viruses {
            check_len("frame individuals", shape.n, v.frames[0].n())?;
            check_len("frame resources", shape.q, v.frames[0].q())?;
        }
        Ok(Self { shape, viruses })
    }

    /// One constant frame per virus.
    pub fn constant(shape: SystemShape, frames: Vec<VirusLayerParams>) -> Result<Self, ModelError> {
        Self::new(shape, frames.into_iter().map(VirusSchedule::constant).collect())
    }

    pub fn shape(&self) -> &SystemShape {
        &self.shape
    }

    pub fn viruses(&self) -> &[VirusSchedule] {
        &self.viruses
    }

    pub fn virus(&self, r: usize) -> Result<&VirusSchedule, ModelError> {
        self.viruses.get(r).ok_or(ModelError::VirusOutOfRange {
            virus: r,
            m: self.shape.m,
        })
    }

    /// Frame of virus `r` governing the transition `k → k + 1`.
    pub fn frame_at(&self, k: usize, r: usize) -> Result<&VirusLayerParams, ModelError> {
        Ok(self.virus(r)?.frame(k))
    }

    /// Frames of all viruses at instant `k`.
    pub fn frames_at(&self, k: usize) -> Vec<&VirusLayerParams> {
        self.viruses.iter().map(|v| v.frame(k)).collect()
    }

    pub fn is_time_invariant(&self) -> bool {
        self.viruses.iter().all(VirusSchedule::is_effectively_constant)
    }

    /// Instants `0..joint_cover()` visit every combination of frames that
    /// occurs jointly across viruses, capped at [`MAX_JOINT_COVER`].
    pub fn joint_cover(&self) -> usize {
        let mut lcm: usize = 1;
        for v in &self.viruses {
            let p = v.period();
            lcm = (lcm / gcd(lcm, p)).saturating_mul(p);
            if lcm > MAX_JOINT_COVER {
                return MAX_JOINT_COVER;
            }
        }
        let last = self.viruses.iter().map(VirusSchedule::last_key).max().unwrap_or(0);
        last.saturating_add(lcm).saturating_add(1).min(MAX_JOINT_COVER)
    }
}
