//! Random configurations that satisfy every well-posedness check, for
//! property tests and sweeps.

use rand::Rng;
use siws_core::dynamics::assemble;
use siws_core::dynamics::LayeredState;
use siws_core::linalg::{spectral_radius_nonneg, DenseMatrix, DEFAULT_TOL};
use siws_core::model::{FrameData, ParameterSchedule, SystemShape, VirusLayerParams, VirusSchedule};

#[derive(Clone, Debug)]
pub struct SynthOptions {
    pub n: (usize, usize),
    pub q: (usize, usize),
    pub m: (usize, usize),
    /// Frames per virus; more than one gives a periodic schedule.
    pub frames: (usize, usize),
    /// Probability that an optional coupling is present.
    pub density: f64,
    /// Force a strongly connected `B_f` for every frame.
    pub irreducible: bool,
    /// Probability of using the full step budget (`h` on its upper bound).
    pub boundary_probability: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            n: (1, 6),
            q: (0, 3),
            m: (1, 3),
            frames: (1, 1),
            density: 0.5,
            irreducible: false,
            boundary_probability: 0.2,
        }
    }
}

fn range(rng: &mut impl Rng, (lo, hi): (usize, usize)) -> usize {
    rng.gen_range(lo..=hi.max(lo))
}

fn coupling(rng: &mut impl Rng, density: f64) -> f64 {
    if rng.gen_bool(density) {
        rng.gen_range(0.05..=1.0)
    } else {
        0.0
    }
}

fn random_frame(rng: &mut impl Rng, n: usize, q: usize, w_max: f64, opts: &SynthOptions) -> FrameData {
    let d = opts.density;
    let mut adjacency = DenseMatrix::zeros(n, n);
    let mut beta_w = DenseMatrix::zeros(n, q);
    let mut c_w = DenseMatrix::zeros(q, n);
    let mut alpha_w = DenseMatrix::zeros(q, q);
    for i in 0..n {
        for j in 0..n {
            adjacency[(i, j)] = coupling(rng, d);
        }
        for j in 0..q {
            beta_w[(i, j)] = coupling(rng, d);
        }
    }
    for j in 0..q {
        for l in 0..n {
            c_w[(j, l)] = coupling(rng, d);
        }
        let forced = rng.gen_range(0..n);
        if c_w[(j, forced)] == 0.0 {
            c_w[(j, forced)] = rng.gen_range(0.05..=1.0);
        }
        for l in 0..q {
            if l != j {
                alpha_w[(j, l)] = coupling(rng, d);
            }
        }
    }
    let beta: Vec<f64> = (0..n)
        .map(|_| {
            if opts.irreducible {
                rng.gen_range(0.05..=1.0)
            } else {
                coupling(rng, 0.8)
            }
        })
        .collect();
    if opts.irreducible {
        for i in 0..n {
            if n > 1 && adjacency[(i, (i + 1) % n)] == 0.0 {
                adjacency[(i, (i + 1) % n)] = rng.gen_range(0.05..=1.0);
            }
        }
        for j in 0..q {
            let i = rng.gen_range(0..n);
            if beta_w[(i, j)] == 0.0 {
                beta_w[(i, j)] = rng.gen_range(0.05..=1.0);
            }
        }
    }
    let delta: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..=2.0)).collect();
    let delta_w: Vec<f64> = (0..q)
        .map(|j| {
            let shed: f64 = c_w.row(j).iter().sum();
            let inflow: f64 = (0..q).filter(|&l| l != j).map(|l| alpha_w[(l, j)]).sum();
            let outflow: f64 = (0..q).filter(|&l| l != j).map(|l| alpha_w[(j, l)]).sum();
            let slack = if rng.gen_bool(0.2) {
                0.0
            } else {
                rng.gen_range(0.0..=1.0)
            };
            let mut dw = shed / w_max + (inflow - outflow).max(0.0) + slack;
            while shed / dw > w_max {
                dw = dw.next_up();
            }
            dw
        })
        .collect();
    FrameData {
        beta,
        delta,
        adjacency,
        beta_w,
        c_w,
        alpha_w,
        delta_w,
        w_max,
    }
}

/// Largest `h` meeting the step budget for the given frames
/// (`frames[r]` lists every frame of virus `r`).
fn max_step(frames: &[Vec<VirusLayerParams>], n: usize) -> f64 {
    let mut rate: f64 = 0.0;
    for f in frames.iter().flatten() {
        rate = rate.max(f.delta().iter().copied().fold(0.0, f64::max));
        for j in 0..f.q() {
            rate = rate.max(f.delta_w()[j] + f.outflow(j));
        }
    }
    for i in 0..n {
        let row: f64 = frames
            .iter()
            .map(|v| v.iter().map(|f| f.infection_row_budget(i)).fold(0.0, f64::max))
            .sum();
        rate = rate.max(row);
    }
    let mut h = 1.0 / rate;
    while h * rate > 1.0 {
        h = h.next_down();
    }
    h
}

/// A random schedule passing every well-posedness check.
pub fn random_schedule(rng: &mut impl Rng, opts: &SynthOptions) -> ParameterSchedule {
    let n = range(rng, opts.n).max(1);
    let q = range(rng, opts.q);
    let m = range(rng, opts.m).max(1);
    let mut frames: Vec<Vec<VirusLayerParams>> = Vec::with_capacity(m);
    for _ in 0..m {
        let w_max = rng.gen_range(0.5..=3.0);
        let count = range(rng, opts.frames).max(1);
        frames.push(
            (0..count)
                .map(|_| {
                    VirusLayerParams::new(random_frame(rng, n, q, w_max, opts), n, q)
                        .expect("synthesized frame is valid")
                })
                .collect(),
        );
    }
    let h_max = max_step(&frames, n);
    let h = if rng.gen_bool(opts.boundary_probability) {
        h_max
    } else {
        rng.gen_range(0.05..1.0) * h_max
    };
    let shape = SystemShape::new(n, q, m, h).expect("valid shape");
    let viruses = frames
        .into_iter()
        .map(|f| {
            if f.len() == 1 {
                VirusSchedule::constant(f.into_iter().next().expect("one frame"))
            } else {
                VirusSchedule::periodic(f).expect("frames share dimensions")
            }
        })
        .collect();
    ParameterSchedule::new(shape, viruses).expect("consistent schedule")
}

/// A random state inside the domain, sometimes on its boundary.
pub fn random_initial(rng: &mut impl Rng, schedule: &ParameterSchedule) -> LayeredState {
    let shape = schedule.shape();
    let mut state = LayeredState::zeros(shape);
    for i in 0..shape.n {
        let weights: Vec<f64> = (0..shape.m).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let total: f64 = weights.iter().sum();
        let budget = if rng.gen_bool(0.1) {
            1.0
        } else {
            rng.gen_range(0.0..=1.0)
        };
        if total > 0.0 {
            for (x, wt) in state.x.iter_mut().zip(&weights) {
                x[i] = (wt / total * budget).min(1.0);
            }
            while state.total_infection(i) > 1.0 {
                let r = (0..shape.m)
                    .max_by(|&a, &b| state.x[a][i].total_cmp(&state.x[b][i]))
                    .expect("m >= 1");
                state.x[r][i] = state.x[r][i].next_down();
            }
        }
    }
    let caps: Vec<f64> = schedule.frames_at(0).iter().map(|f| f.w_max()).collect();
    for (w, &cap) in state.w.iter_mut().zip(&caps) {
        for v in w.iter_mut() {
            *v = if rng.gen_bool(0.1) {
                cap
            } else {
                rng.gen_range(0.0..=cap)
            };
        }
    }
    state
}

fn scaled(f: &VirusLayerParams, s: f64) -> VirusLayerParams {
    let mut data = f.to_data();
    data.beta.iter_mut().for_each(|b| *b *= s);
    data.beta_w = data.beta_w.scale(s);
    VirusLayerParams::new(data, f.n(), f.q()).expect("scaling keeps rates valid")
}

/// Rescales the infection rates of virus `r` (every frame) so that the
/// largest frame radius `sup_k ρ(M_f(k))` equals `target`. Returns `None`
/// when the target is out of reach within the step budget.
pub fn tune_virus_rho(schedule: &ParameterSchedule, r: usize, target: f64) -> Option<ParameterSchedule> {
    let shape = *schedule.shape();
    let v = &schedule.viruses()[r];
    let radius = |s: f64| -> f64 {
        v.frames()
            .iter()
            .map(|f| {
                let sys = assemble(&scaled(f, s), &shape).expect("dimensions match");
                spectral_radius_nonneg(&sys.m_f, DEFAULT_TOL).expect("nonnegative")
            })
            .fold(0.0, f64::max)
    };
    let mut s_max = f64::INFINITY;
    for i in 0..shape.n {
        let others: f64 = schedule
            .viruses()
            .iter()
            .enumerate()
            .filter(|(l, _)| *l != r)
            .map(|(_, o)| o.frames().iter().map(|f| f.infection_row_budget(i)).fold(0.0, f64::max))
            .sum();
        let mine = v.frames().iter().map(|f| f.infection_row_budget(i)).fold(0.0, f64::max);
        if mine > 0.0 {
            s_max = s_max.min((1.0 / shape.h - others) / mine);
        }
    }
    if !s_max.is_finite() || s_max <= 0.0 || radius(0.0) > target || radius(s_max) < target {
        return None;
    }
    let (mut lo, mut hi) = (0.0, s_max);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if radius(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut viruses = schedule.viruses().to_vec();
    let frames = v.frames().iter().map(|f| scaled(f, lo)).collect();
    viruses[r] = VirusSchedule::new(v.kind().clone(), frames).ok()?;
    ParameterSchedule::new(shape, viruses).ok()
}
