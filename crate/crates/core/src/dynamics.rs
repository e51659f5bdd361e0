//! Block linearization, the nonlinear step, and trajectory rollout.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{DomainBound, DynamicsError, ModelError};
use crate::linalg::DenseMatrix;
use crate::model::{ParameterSchedule, SystemShape, VirusLayerParams};
use crate::num;

/// Absolute slack allowed on domain checks after a step.
pub const DOMAIN_SLACK: f64 = 1e-12;

/// Infection fractions `x^r` (length n) and contamination levels `w^r`
/// (length q) of every virus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayeredState {
    pub x: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
}

impl LayeredState {
    /// Checks dimensions and finiteness; domain membership is reported by
    /// the assumption checks instead.
    pub fn new(x: Vec<Vec<f64>>, w: Vec<Vec<f64>>, shape: &SystemShape) -> Result<Self, ModelError> {
        let state = Self { x, w };
        state.check_shape(shape)?;
        Ok(state)
    }

    pub fn zeros(shape: &SystemShape) -> Self {
        Self {
            x: vec![vec![0.0; shape.n]; shape.m],
            w: vec![vec![0.0; shape.q]; shape.m],
        }
    }

    pub fn check_shape(&self, shape: &SystemShape) -> Result<(), ModelError> {
        let dim = |what, expected, found| {
            if expected == found {
                Ok(())
            } else {
                Err(ModelError::Dimension { what, expected, found })
            }
        };
        dim("state viruses (x)", shape.m, self.x.len())?;
        dim("state viruses (w)", shape.m, self.w.len())?;
        for (x, w) in self.x.iter().zip(&self.w) {
            dim("state x", shape.n, x.len())?;
            dim("state w", shape.q, w.len())?;
            if !x.iter().chain(w).all(|v| v.is_finite()) {
                return Err(ModelError::NonFinite { what: "state" });
            }
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.x.len()
    }

    /// Stacked `z^r = [x^r; w^r]`.
    pub fn z(&self, r: usize) -> Vec<f64> {
        let mut z = self.x[r].clone();
        z.extend_from_slice(&self.w[r]);
        z
    }

    /// Overwrites virus `r` from a stacked vector.
    pub fn set_z(&mut self, r: usize, z: &[f64]) {
        let n = self.x[r].len();
        self.x[r].copy_from_slice(&z[..n]);
        self.w[r].copy_from_slice(&z[n..]);
    }

    /// `Σ_ℓ x_i^ℓ`.
    pub fn total_infection(&self, i: usize) -> f64 {
        self.x.iter().map(|x| x[i]).sum()
    }

    pub fn xbar(&self, r: usize) -> f64 {
        mean(&self.x[r])
    }

    pub fn wbar(&self, r: usize) -> f64 {
        mean(&self.w[r])
    }

    /// Euclidean norm of `z^r`.
    pub fn norm(&self, r: usize) -> f64 {
        num::sqrt(self.x[r].iter().chain(&self.w[r]).map(|v| v * v).sum())
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// `B_f`, `D_f` and `M_f = I − h D_f + h B_f` of one virus at one instant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssembledSystem {
    pub n: usize,
    pub q: usize,
    pub h: f64,
    pub b_f: DenseMatrix,
    pub d_f: DenseMatrix,
    pub m_f: DenseMatrix,
}

impl AssembledSystem {
    /// `M = I − h D + h B` restricted to the individuals.
    pub fn m_individual(&self) -> DenseMatrix {
        self.m_f.block(0, 0, self.n, self.n)
    }
}

/// Builds the block matrices. The resource block of `B_f` holds the
/// transfers `α_lj` at `(j, l)`; `D_f` carries `δ^w_j` plus the outflow
/// of resource `j`. Diagonal transfer entries are ignored.
pub fn assemble(params: &VirusLayerParams, shape: &SystemShape) -> Result<AssembledSystem, ModelError> {
    let (n, q) = (shape.n, shape.q);
    if params.n() != n || params.q() != q {
        return Err(ModelError::Dimension {
            what: "frame size n + q",
            expected: n + q,
            found: params.n() + params.q(),
        });
    }
    let dim = n + q;
    let mut b_f = DenseMatrix::zeros(dim, dim);
    b_f.set_block(0, 0, &params.infection_matrix());
    b_f.set_block(0, n, params.beta_w());
    b_f.set_block(n, 0, params.c_w());
    for j in 0..q {
        for l in 0..q {
            if l != j {
                b_f[(n + j, n + l)] = params.alpha_w()[(l, j)];
            }
        }
    }
    let mut diag = params.delta().to_vec();
    diag.extend((0..q).map(|j| params.delta_w()[j] + params.outflow(j)));
    let d_f = DenseMatrix::from_diagonal(&diag);
    let h = shape.h;
    let mut m_f = b_f.scale(h);
    for (i, d) in diag.iter().enumerate() {
        m_f[(i, i)] += 1.0 - h * d;
    }
    Ok(AssembledSystem { n, q, h, b_f, d_f, m_f })
}

/// `M̂_f = M_f − h X B_f` with `X = diag(Σ_ℓ x^ℓ)` on the individuals and
/// zero on the resources, so that `z^r(k+1) = M̂_f z^r(k)`.
pub fn assemble_mhat(system: &AssembledSystem, state: &LayeredState) -> Result<DenseMatrix, ModelError> {
    if state.x.iter().any(|x| x.len() != system.n) {
        return Err(ModelError::Dimension {
            what: "state x",
            expected: system.n,
            found: state.x.iter().map(Vec::len).find(|&l| l != system.n).unwrap_or(0),
        });
    }
    let mut mhat = system.m_f.clone();
    let dim = system.n + system.q;
    for i in 0..system.n {
        let s = system.h * state.total_infection(i);
        for j in 0..dim {
            mhat[(i, j)] -= s * system.b_f[(i, j)];
        }
    }
    Ok(mhat)
}

/// Advances every virus one step from the same time-`k` state.
///
/// Fails when the successor leaves the domain by more than
/// [`DOMAIN_SLACK`]; the reported `k` is 0 and [`rollout`] replaces it
/// with the actual instant.
pub fn step(
    state: &LayeredState,
    frames: &[&VirusLayerParams],
    shape: &SystemShape,
) -> Result<LayeredState, DynamicsError> {
    state.check_shape(shape)?;
    if frames.len() != shape.m {
        return Err(ModelError::Dimension {
            what: "frames per step",
            expected: shape.m,
            found: frames.len(),
        }
        .into());
    }
    for f in frames {
        if f.n() != shape.n || f.q() != shape.q {
            return Err(ModelError::Dimension {
                what: "frame size n + q",
                expected: shape.n + shape.q,
                found: f.n() + f.q(),
            }
            .into());
        }
    }
    let (n, q, h) = (shape.n, shape.q, shape.h);
    let susceptible: Vec<f64> = (0..n).map(|i| 1.0 - state.total_infection(i)).collect();
    let mut next = LayeredState {
        x: Vec::with_capacity(shape.m),
        w: Vec::with_capacity(shape.m),
    };
    for (r, f) in frames.iter().enumerate() {
        let (x, w) = (&state.x[r], &state.w[r]);
        let adjacency = f.adjacency();
        let beta_w = f.beta_w();
        let x_next: Vec<f64> = (0..n)
            .map(|i| {
                let contact: f64 = adjacency.row(i).iter().zip(x).map(|(a, xj)| a * xj).sum();
                let exposure: f64 = beta_w.row(i).iter().zip(w).map(|(b, wj)| b * wj).sum();
                let gain = f.beta()[i] * contact + exposure;
                x[i] + h * (-f.delta()[i] * x[i] + susceptible[i] * gain)
            })
            .collect();
        let alpha = f.alpha_w();
        let w_next: Vec<f64> = (0..q)
            .map(|j| {
                let inflow: f64 = (0..q).filter(|&l| l != j).map(|l| alpha[(l, j)] * w[l]).sum();
                let shed: f64 = f.c_w().row(j).iter().zip(x).map(|(c, xl)| c * xl).sum();
                w[j] + h * (-(f.delta_w()[j] + f.outflow(j)) * w[j] + inflow + shed)
            })
            .collect();
        next.x.push(x_next);
        next.w.push(w_next);
    }
    check_domain(&next, frames)?;
    Ok(next)
}

fn check_domain(state: &LayeredState, frames: &[&VirusLayerParams]) -> Result<(), DynamicsError> {
    let fail = |virus, index, value, bound| {
        Err(DynamicsError::DomainViolation {
            k: 0,
            virus,
            index,
            value,
            bound,
        })
    };
    for (r, f) in frames.iter().enumerate() {
        for (i, &v) in state.x[r].iter().enumerate() {
            if v < -DOMAIN_SLACK {
                return fail(r, i, v, DomainBound::InfectionBelowZero);
            }
            if v > 1.0 + DOMAIN_SLACK {
                return fail(r, i, v, DomainBound::InfectionAboveOne);
            }
        }
        let cap = f.w_max() + DOMAIN_SLACK * f.w_max().max(1.0);
        for (j, &v) in state.w[r].iter().enumerate() {
            if v < -DOMAIN_SLACK {
                return fail(r, j, v, DomainBound::ContaminationBelowZero);
            }
            if v > cap {
                return fail(r, j, v, DomainBound::ContaminationAboveCap);
            }
        }
    }
    for i in 0..state.x.first().map_or(0, Vec::len) {
        let s = state.total_infection(i);
        if s > 1.0 + DOMAIN_SLACK {
            return fail(0, i, s, DomainBound::InfectionSumAboveOne);
        }
    }
    Ok(())
}

/// Per-step averages and norms of every virus; full states only on request.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    m: usize,
    xbar: Vec<f64>,
    wbar: Vec<f64>,
    norms: Vec<f64>,
    states: Option<Vec<LayeredState>>,
    last: LayeredState,
}

impl Trajectory {
    fn start(initial: &LayeredState, keep_states: bool) -> Self {
        let mut t = Self {
            m: initial.m(),
            xbar: Vec::new(),
            wbar: Vec::new(),
            norms: Vec::new(),
            states: keep_states.then(Vec::new),
            last: initial.clone(),
        };
        t.record(initial.clone());
        t
    }

    fn record(&mut self, state: LayeredState) {
        for r in 0..self.m {
            self.xbar.push(state.xbar(r));
            self.wbar.push(state.wbar(r));
            self.norms.push(state.norm(r));
        }
        if let Some(states) = &mut self.states {
            states.push(state.clone());
        }
        self.last = state;
    }

    /// Number of recorded instants (steps taken plus one).
    pub fn len(&self) -> usize {
        self.xbar.len() / self.m.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.xbar.is_empty()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn xbar(&self, k: usize, r: usize) -> f64 {
        self.xbar[k * self.m + r]
    }

    pub fn wbar(&self, k: usize, r: usize) -> f64 {
        self.wbar[k * self.m + r]
    }

    pub fn norm(&self, k: usize, r: usize) -> f64 {
        self.norms[k * self.m + r]
    }

    /// `‖z^r(k)‖` for every recorded `k`.
    pub fn norm_series(&self, r: usize) -> Vec<f64> {
        (0..self.len()).map(|k| self.norm(k, r)).collect()
    }

    pub fn states(&self) -> Option<&[LayeredState]> {
        self.states.as_deref()
    }

    pub fn last(&self) -> &LayeredState {
        &self.last
    }
}

/// Iterates the dynamics for `horizon` steps.
pub fn rollout(
    schedule: &ParameterSchedule,
    initial: &LayeredState,
    horizon: usize,
    keep_states: bool,
) -> Result<Trajectory, DynamicsError> {
    rollout_until(schedule, initial, horizon, keep_states, |_, _| false)
}

/// Iterates at most `max_steps` steps, stopping early once `stop(k, z(k))`
/// holds for a newly reached instant `k`.
pub fn rollout_until<F>(
    schedule: &ParameterSchedule,
    initial: &LayeredState,
    max_steps: usize,
    keep_states: bool,
    mut stop: F,
) -> Result<Trajectory, DynamicsError>
where
    F: FnMut(usize, &LayeredState) -> bool,
{
    let shape = schedule.shape();
    initial.check_shape(shape)?;
    let mut trajectory = Trajectory::start(initial, keep_states);
    let mut state = initial.clone();
    for k in 0..max_steps {
        let frames = schedule.frames_at(k);
        state = step(&state, &frames, shape).map_err(|e| match e {
            DynamicsError::DomainViolation {
                virus,
                index,
                value,
                bound,
                ..
            } => DynamicsError::DomainViolation {
                k: k + 1,
                virus,
                index,
                value,
                bound,
            },
            other => other,
        })?;
        trajectory.record(state.clone());
        if stop(k + 1, &state) {
            break;
        }
    }
    Ok(trajectory)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FrameData;

    fn toy() -> (VirusLayerParams, SystemShape) {
        let data = FrameData {
            beta: vec![0.2],
            delta: vec![1.0],
            adjacency: DenseMatrix::identity(1),
            beta_w: DenseMatrix::filled(1, 1, 0.4),
            c_w: DenseMatrix::filled(1, 1, 0.6),
            alpha_w: DenseMatrix::zeros(1, 1),
            delta_w: vec![1.0],
            w_max: 1.0,
        };
        (
            VirusLayerParams::new(data, 1, 1).unwrap(),
            SystemShape::new(1, 1, 1, 0.5).unwrap(),
        )
    }

    fn close(a: &DenseMatrix, rows: &[[f64; 2]]) -> bool {
        let b = DenseMatrix::from_rows(rows).unwrap();
        a.sub(&b).unwrap().max_abs() < 1e-15
    }

    #[test]
    fn assembles_toy_system() {
        let (p, s) = toy();
        let sys = assemble(&p, &s).unwrap();
        assert!(close(&sys.m_f, &[[0.6, 0.2], [0.3, 0.5]]));
        assert!(close(&sys.b_f, &[[0.2, 0.4], [0.6, 0.0]]));
        assert!(close(&sys.d_f, &[[1.0, 0.0], [0.0, 1.0]]));
        assert_eq!(sys.m_individual().shape(), (1, 1));
        assert!((sys.m_individual()[(0, 0)] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn zero_rates_unit_step_give_zero_matrix() {
        let data = FrameData {
            beta: vec![0.0],
            delta: vec![1.0],
            adjacency: DenseMatrix::zeros(1, 1),
            beta_w: DenseMatrix::zeros(1, 1),
            c_w: DenseMatrix::filled(1, 1, 0.0),
            alpha_w: DenseMatrix::zeros(1, 1),
            delta_w: vec![1.0],
            w_max: 1.0,
        };
        let p = VirusLayerParams::new_unvalidated(data, 1, 1).unwrap();
        let sys = assemble(&p, &SystemShape::new(1, 1, 1, 1.0).unwrap()).unwrap();
        assert_eq!(sys.m_f.max_abs(), 0.0);
    }

    #[test]
    fn transfers_enter_transposed_with_outflow_on_diagonal() {
        let data = FrameData {
            beta: vec![0.0],
            delta: vec![1.0],
            adjacency: DenseMatrix::zeros(1, 1),
            beta_w: DenseMatrix::zeros(1, 2),
            c_w: DenseMatrix::filled(2, 1, 1.0),
            alpha_w: DenseMatrix::from_rows(&[[9.0, 0.3], [0.0, 9.0]]).unwrap(),
            delta_w: vec![1.0, 2.0],
            w_max: 1.0,
        };
        let p = VirusLayerParams::new(data, 1, 2).unwrap();
        let sys = assemble(&p, &SystemShape::new(1, 2, 1, 0.1).unwrap()).unwrap();
        // Transfer 0 -> 1 feeds resource 1 from resource 0.
        assert_eq!(sys.b_f[(2, 1)], 0.3);
        assert_eq!(sys.b_f[(1, 2)], 0.0);
        assert_eq!(sys.b_f[(1, 1)], 0.0);
        assert!((sys.d_f[(1, 1)] - 1.3).abs() < 1e-15);
        assert_eq!(sys.d_f[(2, 2)], 2.0);
    }

    #[test]
    fn toy_step_matches_hand_evaluation() {
        let (p, s) = toy();
        let z = LayeredState::new(vec![vec![0.5]], vec![vec![0.5]], &s).unwrap();
        let next = step(&z, &[&p], &s).unwrap();
        assert!((next.x[0][0] - 0.325).abs() < 1e-15);
        assert!((next.w[0][0] - 0.4).abs() < 1e-15);
        // Second step by hand: x = 0.325 + 0.5(-0.325 + 0.675(0.2*0.325 + 0.4*0.4)),
        // w = 0.4 + 0.5(-0.4 + 0.6*0.325).
        let next2 = step(&next, &[&p], &s).unwrap();
        let x2 = 0.325 + 0.5 * (-0.325 + 0.675 * (0.2 * 0.325 + 0.4 * 0.4));
        let w2 = 0.4 + 0.5 * (-0.4 + 0.6 * 0.325);
        assert!((next2.x[0][0] - x2).abs() < 1e-15);
        assert!((next2.w[0][0] - w2).abs() < 1e-15);

        let sched = ParameterSchedule::constant(s, vec![p]).unwrap();
        let t = rollout(&sched, &z, 2, true).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.states().unwrap()[2], next2);
    }

    #[test]
    fn zero_state_is_fixed_point() {
        let (p, s) = toy();
        let z = LayeredState::zeros(&s);
        assert_eq!(step(&z, &[&p], &s).unwrap(), z);
        let sched = ParameterSchedule::constant(s, vec![p]).unwrap();
        let t = rollout(&sched, &z, 50, false).unwrap();
        assert!((0..t.len()).all(|k| t.xbar(k, 0) == 0.0 && t.wbar(k, 0) == 0.0));
    }

    #[test]
    fn full_infection_removes_gain() {
        let (p, s) = toy();
        let z = LayeredState::new(vec![vec![1.0]], vec![vec![1.0]], &s).unwrap();
        let next = step(&z, &[&p], &s).unwrap();
        assert_eq!(next.x[0][0], 1.0 - 0.5 * 1.0);
    }

    #[test]
    fn mhat_matches_hand_values_and_step() {
        let (p, s) = toy();
        let sys = assemble(&p, &s).unwrap();
        let zero = LayeredState::zeros(&s);
        assert_eq!(assemble_mhat(&sys, &zero).unwrap(), sys.m_f);
        let z = LayeredState::new(vec![vec![0.5]], vec![vec![0.5]], &s).unwrap();
        let mhat = assemble_mhat(&sys, &z).unwrap();
        assert!(close(&mhat, &[[0.55, 0.1], [0.3, 0.5]]));
        let via_matrix = mhat.mul_vec(&z.z(0));
        let via_step = step(&z, &[&p], &s).unwrap().z(0);
        assert!(via_matrix.iter().zip(&via_step).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn domain_violation_is_reported_with_instant() {
        let data = FrameData {
            beta: vec![0.0],
            delta: vec![3.0],
            adjacency: DenseMatrix::zeros(1, 1),
            beta_w: DenseMatrix::zeros(1, 1),
            c_w: DenseMatrix::filled(1, 1, 1.0),
            alpha_w: DenseMatrix::zeros(1, 1),
            delta_w: vec![1.0],
            w_max: 1.0,
        };
        let p = VirusLayerParams::new(data, 1, 1).unwrap();
        let s = SystemShape::new(1, 1, 1, 1.0).unwrap();
        let sched = ParameterSchedule::constant(s, vec![p]).unwrap();
        let z = LayeredState::new(vec![vec![0.5]], vec![vec![0.0]], &s).unwrap();
        let err = rollout(&sched, &z, 3, false).unwrap_err();
        assert!(matches!(
            err,
            DynamicsError::DomainViolation {
                k: 1,
                bound: DomainBound::InfectionBelowZero,
                ..
            }
        ));
    }

    #[test]
    fn rollout_until_stops_early() {
        let (p, s) = toy();
        let sched = ParameterSchedule::constant(s, vec![p]).unwrap();
        let z = LayeredState::new(vec![vec![0.5]], vec![vec![0.5]], &s).unwrap();
        let t = rollout_until(&sched, &z, 1000, false, |k, _| k == 7).unwrap();
        assert_eq!(t.len(), 8);
    }
}
