//! Well-posedness checks on configurations, schedules and initial states.
//!
//! Every check is pure and returns an [`AssumptionReport`]; failures are
//! report entries, never errors. Indices are 0-based in the API and
//! serialized 1-based.

use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::dynamics::{assemble, LayeredState};
use crate::linalg::is_irreducible;
use crate::model::{ParameterSchedule, SystemShape, VirusLayerParams};

/// Offenders kept per check; the total count is always reported.
pub const MAX_OFFENDERS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssumptionId {
    InitialState,
    PositiveRates,
    SheddingRatio,
    StepBudget,
    Irreducibility,
    PositiveRatesTv,
    SheddingRatioTv,
    StepBudgetTv,
    /// Shedding plus net transfer inflow cannot push a resource above its
    /// cap. Coincides with the shedding-ratio bound when transfers balance.
    ResourceCapacity,
}

impl AssumptionId {
    /// Conventional assumption number, if the condition has one.
    pub fn number(self) -> Option<u8> {
        match self {
            Self::InitialState => Some(1),
            Self::PositiveRates => Some(2),
            Self::SheddingRatio => Some(3),
            Self::StepBudget => Some(4),
            Self::Irreducibility => Some(5),
            Self::PositiveRatesTv => Some(6),
            Self::SheddingRatioTv => Some(7),
            Self::StepBudgetTv => Some(8),
            Self::ResourceCapacity => None,
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Self::InitialState => "initial state in domain",
            Self::PositiveRates | Self::PositiveRatesTv => "positive rates",
            Self::SheddingRatio | Self::SheddingRatioTv => "shedding ratio within w_max",
            Self::StepBudget | Self::StepBudgetTv => "sampling-step budget",
            Self::Irreducibility => "irreducible B_f",
            Self::ResourceCapacity => "resource capacity",
        }
    }

    /// The time-varying counterpart of a per-frame check.
    pub fn time_varying(self) -> Self {
        match self {
            Self::PositiveRates => Self::PositiveRatesTv,
            Self::SheddingRatio => Self::SheddingRatioTv,
            Self::StepBudget => Self::StepBudgetTv,
            other => other,
        }
    }
}

impl fmt::Display for AssumptionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.number() {
            Some(k) => write!(f, "Assumption {k} ({})", self.title()),
            None => f.write_str(self.title()),
        }
    }
}

/// The quantity an offender refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    /// `x_i^r(0)`.
    Infection,
    /// `Σ_ℓ x_i^ℓ(0)`.
    InfectionSum,
    /// `w_j^r(0)`.
    Contamination,
    Beta,
    Delta,
    Adjacency,
    BetaW,
    CW,
    AlphaW,
    DeltaW,
    /// Row `j` of `c_w` has no positive entry.
    SheddingRow,
    /// `Σ_l c_jl / δ^w_j`.
    SheddingRatio,
    WMax,
    /// `w_max` differs between frames of one virus.
    WMaxVaries,
    /// `Σ_l c_jl + (inflow_j − outflow_j) w_max − δ^w_j w_max`.
    ResourceBalance,
    /// `h δ_i`.
    HDelta,
    /// `h (δ^w_j + outflow_j)`.
    HDeltaW,
    /// `h Σ_ℓ (Σ_p β_ip + w_max Σ_p β^w_ip)`.
    InfectionBudget,
    /// Number of strongly connected components of the support of `B_f`.
    Components,
}

pub(crate) mod one_based {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &usize, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(*v as u64 + 1)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<usize, D::Error> {
        let v = u64::deserialize(d)?;
        v.checked_sub(1)
            .map(|v| v as usize)
            .ok_or_else(|| serde::de::Error::custom("indices are 1-based"))
    }

    pub mod opt {
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &Option<usize>, s: S) -> Result<S::Ok, S::Error> {
            match v {
                Some(v) => s.serialize_some(&(*v as u64 + 1)),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<usize>, D::Error> {
            match Option::<u64>::deserialize(d)? {
                Some(v) => v
                    .checked_sub(1)
                    .map(|v| Some(v as usize))
                    .ok_or_else(|| serde::de::Error::custom("indices are 1-based")),
                None => Ok(None),
            }
        }
    }
}

/// One failing entry of a check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Offender {
    pub quantity: Quantity,
    #[serde(with = "one_based::opt", default)]
    pub virus: Option<usize>,
    #[serde(with = "one_based::opt", default)]
    pub frame: Option<usize>,
    /// Instant `k` (not shifted; instants start at 0).
    #[serde(default)]
    pub instant: Option<usize>,
    #[serde(with = "one_based")]
    pub index: usize,
    #[serde(with = "one_based::opt", default)]
    pub column: Option<usize>,
    pub value: f64,
}

impl Offender {
    fn new(quantity: Quantity, index: usize, value: f64) -> Self {
        Self {
            quantity,
            virus: None,
            frame: None,
            instant: None,
            index,
            column: None,
            value,
        }
    }

    fn at(mut self, column: usize) -> Self {
        self.column = Some(column);
        self
    }
}

/// Outcome of one assumption.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub id: AssumptionId,
    pub passed: bool,
    pub offenders: Vec<Offender>,
    pub offender_count: usize,
    /// Largest value of the bounded quantity over everything examined.
    pub worst: Option<f64>,
    /// `bound − worst`; negative when the check fails.
    pub margin: Option<f64>,
    /// Smallest `w_max` that would satisfy a shedding-ratio bound.
    pub required_minimum: Option<f64>,
}

impl AssumptionCheck {
    fn new(id: AssumptionId) -> Self {
        Self {
            id,
            passed: true,
            offenders: Vec::new(),
            offender_count: 0,
            worst: None,
            margin: None,
            required_minimum: None,
        }
    }

    fn offend(&mut self, o: Offender) {
        self.passed = false;
        self.offender_count += 1;
        if self.offenders.len() < MAX_OFFENDERS {
            self.offenders.push(o);
        }
    }

    /// Tracks the worst `value` against an upper `bound`.
    fn observe(&mut self, value: f64, bound: f64) {
        if self.worst.is_none_or(|w| value > w) {
            self.worst = Some(value);
        }
        let m = bound - value;
        if self.margin.is_none_or(|old| m < old) {
            self.margin = Some(m);
        }
    }

    fn absorb(&mut self, other: AssumptionCheck) {
        self.passed &= other.passed;
        self.offender_count += other.offender_count;
        for o in other.offenders {
            if self.offenders.len() < MAX_OFFENDERS {
                self.offenders.push(o);
            }
        }
        if let Some(w) = other.worst {
            if self.worst.is_none_or(|old| w > old) {
                self.worst = Some(w);
            }
        }
        if let Some(m) = other.margin {
            if self.margin.is_none_or(|old| m < old) {
                self.margin = Some(m);
            }
        }
        if let Some(r) = other.required_minimum {
            if self.required_minimum.is_none_or(|old| r > old) {
                self.required_minimum = Some(r);
            }
        }
    }

    fn tag(mut self, virus: Option<usize>, frame: Option<usize>) -> Self {
        for o in &mut self.offenders {
            o.virus = o.virus.or(virus);
            o.frame = o.frame.or(frame);
        }
        self
    }
}

/// Collection of checks; at most one entry per [`AssumptionId`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub checks: Vec<AssumptionCheck>,
}

impl AssumptionReport {
    fn single(check: AssumptionCheck) -> Self {
        Self {
            checks: alloc::vec![check],
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, id: AssumptionId) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.id == id)
    }

    pub fn failed(&self) -> impl Iterator<Item = AssumptionId> + '_ {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.id)
    }

    /// Folds `other` in, combining entries with the same id.
    pub fn merge(&mut self, other: AssumptionReport) {
        for c in other.checks {
            match self.checks.iter_mut().find(|e| e.id == c.id) {
                Some(existing) => existing.absorb(c),
                None => self.checks.push(c),
            }
        }
        self.checks.sort_by_key(|c| c.id);
    }

    fn relabel(mut self, f: impl Fn(AssumptionId) -> AssumptionId) -> Self {
        for c in &mut self.checks {
            c.id = f(c.id);
        }
        self
    }

    fn tag(mut self, virus: Option<usize>, frame: Option<usize>) -> Self {
        self.checks = self.checks.into_iter().map(|c| c.tag(virus, frame)).collect();
        self
    }
}

/// Cross-virus sums in `[0, 1]`, fractions nonnegative, contamination in
/// `[0, w_max^r]`. `w_max` holds one cap per virus.
pub fn check_initial(state: &LayeredState, w_max: &[f64]) -> AssumptionReport {
    let mut c = AssumptionCheck::new(AssumptionId::InitialState);
    let n = state.x.first().map_or(0, Vec::len);
    for (r, x) in state.x.iter().enumerate() {
        for (i, &v) in x.iter().enumerate() {
            if !(v >= 0.0) {
                c.offend(Offender {
                    virus: Some(r),
                    ..Offender::new(Quantity::Infection, i, v)
                });
            }
        }
    }
    for i in 0..n {
        let s = state.total_infection(i);
        c.observe(s, 1.0);
        if !(s <= 1.0) {
            c.offend(Offender::new(Quantity::InfectionSum, i, s));
        }
    }
    for (r, w) in state.w.iter().enumerate() {
        let cap = w_max.get(r).copied().unwrap_or(f64::INFINITY);
        for (j, &v) in w.iter().enumerate() {
            if !(v >= 0.0 && v <= cap) {
                c.offend(Offender {
                    virus: Some(r),
                    ..Offender::new(Quantity::Contamination, j, v)
                });
            }
        }
    }
    AssumptionReport::single(c)
}

/// Positive healing and decay rates, nonnegative couplings, and a positive
/// shedding rate into every resource.
pub fn check_rates(frame: &VirusLayerParams) -> AssumptionReport {
    let mut c = AssumptionCheck::new(AssumptionId::PositiveRates);
    for (i, &d) in frame.delta().iter().enumerate() {
        if !(d > 0.0) {
            c.offend(Offender::new(Quantity::Delta, i, d));
        }
    }
    for (j, &d) in frame.delta_w().iter().enumerate() {
        if !(d > 0.0) {
            c.offend(Offender::new(Quantity::DeltaW, j, d));
        }
    }
    for (i, &b) in frame.beta().iter().enumerate() {
        if !(b >= 0.0) {
            c.offend(Offender::new(Quantity::Beta, i, b));
        }
    }
    for (quantity, m) in [
        (Quantity::Adjacency, frame.adjacency()),
        (Quantity::BetaW, frame.beta_w()),
        (Quantity::CW, frame.c_w()),
        (Quantity::AlphaW, frame.alpha_w()),
    ] {
        for i in 0..m.rows() {
            for (j, &v) in m.row(i).iter().enumerate() {
                if !(v >= 0.0) {
                    c.offend(Offender::new(quantity, i, v).at(j));
                }
            }
        }
    }
    for j in 0..frame.q() {
        if !frame.c_w().row(j).iter().any(|&v| v > 0.0) {
            c.offend(Offender::new(Quantity::SheddingRow, j, 0.0));
        }
    }
    AssumptionReport::single(c)
}

/// `Σ_l c_jl / δ^w_j ∈ [0, w_max]` for every resource `j`.
pub fn check_shedding_ratio(frame: &VirusLayerParams) -> AssumptionReport {
    let mut c = AssumptionCheck::new(AssumptionId::SheddingRatio);
    let w_max = frame.w_max();
    if !(w_max > 0.0) {
        c.offend(Offender::new(Quantity::WMax, 0, w_max));
    }
    for j in 0..frame.q() {
        let ratio = frame.shedding_ratio(j);
        c.observe(ratio, w_max);
        if !(ratio >= 0.0 && ratio <= w_max) {
            c.offend(Offender::new(Quantity::SheddingRatio, j, ratio));
        }
    }
    if frame.q() > 0 {
        c.required_minimum = Some(frame.required_w_max());
    }
    AssumptionReport::single(c)
}

/// `Σ_l c_jl + (inflow_j − outflow_j) w_max ≤ δ^w_j w_max` per resource.
pub fn check_resource_capacity(frame: &VirusLayerParams) -> AssumptionReport {
    let mut c = AssumptionCheck::new(AssumptionId::ResourceCapacity);
    let w_max = frame.w_max();
    for j in 0..frame.q() {
        let shed: f64 = frame.c_w().row(j).iter().sum();
        let excess = shed + (frame.inflow(j) - frame.outflow(j) - frame.delta_w()[j]) * w_max;
        // Relative slack so balanced transfers do not fail on rounding.
        let scale = shed + (frame.inflow(j) + frame.outflow(j) + frame.delta_w()[j]) * w_max.abs();
        c.observe(excess, 0.0);
        if !(excess <= 1e-12 * scale) {
            c.offend(Offender::new(Quantity::ResourceBalance, j, excess));
        }
    }
    AssumptionReport::single(c)
}

/// Step-size budget at every instant `k < min(horizon, joint cover)`:
/// `h δ_i ∈ [0, 1]`, `h (δ^w_j + outflow_j) ∈ [0, 1]`, and the cross-virus
/// infection budget `h Σ_ℓ (Σ_p β_ip^ℓ + w_max^ℓ Σ_p β^w_ip^ℓ) ∈ [0, 1]`.
pub fn check_step_budget(schedule: &ParameterSchedule, horizon: usize) -> AssumptionReport {
    let mut c = AssumptionCheck::new(AssumptionId::StepBudget);
    let shape = schedule.shape();
    let h = shape.h;
    let instants = horizon.max(1).min(schedule.joint_cover());
    let mut seen: Vec<(Quantity, Option<usize>, usize)> = Vec::new();
    let mut report = |c: &mut AssumptionCheck, o: Offender| {
        let key = (o.quantity, o.virus, o.index);
        if !seen.contains(&key) {
            seen.push(key);
            c.offend(o);
        }
    };
    for k in 0..instants {
        let frames = schedule.frames_at(k);
        for (r, f) in frames.iter().enumerate() {
            let frame = Some(schedule.viruses()[r].frame_index(k));
            for (i, &d) in f.delta().iter().enumerate() {
                let v = h * d;
                c.observe(v, 1.0);
                if !(0.0..=1.0).contains(&v) {
                    let o = Offender::new(Quantity::HDelta, i, v);
                    report(
                        &mut c,
                        Offender {
                            virus: Some(r),
                            frame,
                            instant: Some(k),
                            ..o
                        },
                    );
                }
            }
            for j in 0..f.q() {
                let v = h * (f.delta_w()[j] + f.outflow(j));
                c.observe(v, 1.0);
                if !(0.0..=1.0).contains(&v) {
                    let o = Offender::new(Quantity::HDeltaW, j, v);
                    report(
                        &mut c,
                        Offender {
                            virus: Some(r),
                            frame,
                            instant: Some(k),
                            ..o
                        },
                    );
                }
            }
        }
        for i in 0..shape.n {
            let v = h * frames.iter().map(|f| f.infection_row_budget(i)).sum::<f64>();
            c.observe(v, 1.0);
            if !(0.0..=1.0).contains(&v) {
                let o = Offender::new(Quantity::InfectionBudget, i, v);
                report(&mut c, Offender { instant: Some(k), ..o });
            }
        }
    }
    AssumptionReport::single(c)
}

/// Single strongly connected component in the support of `B_f`.
pub fn check_irreducibility(frame: &VirusLayerParams, shape: &SystemShape) -> AssumptionReport {
    let mut c = AssumptionCheck::new(AssumptionId::Irreducibility);
    let single = SystemShape { m: 1, ..*shape };
    let irreducible = assemble(frame, &single)
        .ok()
        .and_then(|sys| is_irreducible(&sys.b_f).ok())
        .unwrap_or(false);
    if !irreducible {
        let comps = assemble(frame, &single)
            .ok()
            .and_then(|sys| crate::linalg::Support::of_positive(&sys.b_f).ok())
            .map(|s| crate::linalg::scc_condensation(&s).len())
            .unwrap_or(0);
        c.offend(Offender::new(Quantity::Components, 0, comps as f64));
    }
    AssumptionReport::single(c)
}

/// Per-frame checks on every distinct frame of every virus plus the step
/// budget. Time-varying schedules are reported under the time-varying ids,
/// and additionally require one `w_max` per virus across its frames.
pub fn check_schedule(schedule: &ParameterSchedule, horizon: usize) -> AssumptionReport {
    let varying = !schedule.is_time_invariant();
    let mut report = AssumptionReport::default();
    for (r, v) in schedule.viruses().iter().enumerate() {
        for idx in v.distinct_frames() {
            let f = &v.frames()[idx];
            let frame = varying.then_some(idx);
            report.merge(check_rates(f).tag(Some(r), frame));
            report.merge(check_shedding_ratio(f).tag(Some(r), frame));
            report.merge(check_resource_capacity(f).tag(Some(r), frame));
        }
        let w0 = v.frames()[0].w_max();
        if let Some((idx, f)) = v.frames().iter().enumerate().find(|(_, f)| f.w_max() != w0) {
            let mut c = AssumptionCheck::new(AssumptionId::SheddingRatio);
            c.offend(Offender {
                virus: Some(r),
                frame: Some(idx),
                ..Offender::new(Quantity::WMaxVaries, 0, f.w_max())
            });
            report.merge(AssumptionReport::single(c));
        }
    }
    report.merge(check_step_budget(schedule, horizon));
    if varying {
        report = report.relabel(AssumptionId::time_varying);
    }
    report
}

/// [`check_schedule`] plus [`check_initial`] against the caps at `k = 0`.
pub fn check_all(schedule: &ParameterSchedule, initial: &LayeredState, horizon: usize) -> AssumptionReport {
    let mut report = check_schedule(schedule, horizon);
    let caps: Vec<f64> = schedule.frames_at(0).iter().map(|f| f.w_max()).collect();
    report.merge(check_initial(initial, &caps));
    report
}
