//! End-to-end runs: checks, certificates, rollout, summary, calibration.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use siws_core::assumptions::{check_all, AssumptionReport};
use siws_core::dynamics::{assemble, rollout_until, LayeredState, Trajectory};
use siws_core::linalg::{spectral_radius_nonneg, DEFAULT_TOL};
use siws_core::model::ParameterSchedule;
use siws_core::stability::{certify_auto, slow_variation_constants, Certificate, DEFAULT_SIGMA};
use siws_core::{DynamicsError, StabilityError};

use crate::config::{
    parse_config, Config, ConfigError, InitialRanges, Outcome, ReferenceQuantity, ReferenceValue, Relation,
};
use crate::csv_io::TrajectoryCsv;
use crate::sampling::{sample_initial, SamplingError};

/// Shipped configurations, embedded at build time.
pub const NAMED_EXPERIMENTS: [(&str, &str); 4] = [
    ("fig2", include_str!("../../../configs/fig2.json")),
    ("fig3", include_str!("../../../configs/fig3.json")),
    ("fig4", include_str!("../../../configs/fig4.json")),
    ("fig5", include_str!("../../../configs/fig5.json")),
];

/// Averages must fall below this fraction of their initial value.
pub const ERADICATION_RATIO: f64 = 1e-6;
/// Terminal averages above this fraction of the initial value count as
/// persistent.
pub const PERSISTENCE_RATIO: f64 = 1e-3;
pub const DEFAULT_STEP_CAP: usize = 2_000_000;
pub const DEFAULT_MIN_STEPS: usize = 1_000;
/// Absolute tolerance for comparing against values printed to four
/// decimals.
pub const CALIBRATION_TOL: f64 = 5e-5;
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("unknown experiment `{0}` (expected fig2, fig3, fig4, fig5 or all)")]
    UnknownExperiment(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("initial state: {0}")]
    Sampling(#[from] SamplingError),
    #[error("config has neither `initial` ranges nor an `initial_state`")]
    NoInitialState,
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error("writing artifacts: {0}")]
    Io(#[from] io::Error),
    #[error("serializing artifacts: {0}")]
    Json(#[from] serde_json::Error),
}

pub fn named_config(name: &str) -> Result<Config, ExperimentError> {
    let (_, text) = NAMED_EXPERIMENTS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| ExperimentError::UnknownExperiment(name.to_string()))?;
    Ok(parse_config(text, &format!("configs/{name}.json"))?)
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialSource {
    Ranges(InitialRanges),
    State(LayeredState),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Horizon {
    /// Run until every certified virus has decayed, at least `min_steps`
    /// and at most `cap` steps.
    Adaptive {
        min_steps: usize,
        cap: usize,
    },
    Fixed {
        steps: usize,
    },
}

#[derive(Clone, Debug)]
pub struct Experiment {
    pub name: String,
    pub schedule: ParameterSchedule,
    pub initial: InitialSource,
    pub seed: u64,
    pub horizon: Horizon,
    pub per_node: bool,
    /// Emit every `stride`-th instant to the CSV (the last one always).
    pub stride: usize,
    pub sigma: f64,
    pub expected: Option<Vec<Outcome>>,
    pub reference: Vec<ReferenceValue>,
    pub topology: Option<String>,
}

impl Experiment {
    /// Experiment from a config; `seed` and `horizon` override the file.
    pub fn from_config(config: &Config, seed: Option<u64>, horizon: Option<usize>) -> Result<Self, ExperimentError> {
        let initial = match (config.initial_state()?, &config.file.initial) {
            (Some(state), _) => InitialSource::State(state),
            (None, Some(ranges)) => InitialSource::Ranges(ranges.clone()),
            (None, None) => return Err(ExperimentError::NoInitialState),
        };
        let horizon = match horizon.or(config.file.horizon) {
            Some(steps) => Horizon::Fixed { steps },
            None => Horizon::Adaptive {
                min_steps: DEFAULT_MIN_STEPS,
                cap: DEFAULT_STEP_CAP,
            },
        };
        Ok(Self {
            name: config.name().to_string(),
            schedule: config.schedule.clone(),
            initial,
            seed: seed.or(config.file.seed).unwrap_or(DEFAULT_SEED),
            horizon,
            per_node: false,
            stride: 1,
            sigma: DEFAULT_SIGMA,
            expected: config.file.expected.clone(),
            reference: config.file.reference.clone(),
            topology: config.file.topology.clone(),
        })
    }

    pub fn named(name: &str, seed: Option<u64>) -> Result<Self, ExperimentError> {
        Self::from_config(&named_config(name)?, seed, None)
    }

    pub fn initial_state(&self) -> Result<LayeredState, ExperimentError> {
        Ok(match &self.initial {
            InitialSource::State(s) => s.clone(),
            InitialSource::Ranges(r) => sample_initial(r, self.schedule.shape(), self.seed)?,
        })
    }

    fn step_cap(&self) -> usize {
        match self.horizon {
            Horizon::Adaptive { cap, .. } => cap,
            Horizon::Fixed { steps } => steps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VirusSummary {
    /// 1-based.
    pub virus: usize,
    pub certificate: String,
    pub certified: bool,
    pub xbar_initial: f64,
    pub wbar_initial: f64,
    pub xbar_final: f64,
    pub wbar_final: f64,
    /// `x̄(final) / x̄(0)`, `None` when `x̄(0) = 0`.
    pub xbar_ratio: Option<f64>,
    /// Per-step factor `γ` from a least-squares fit of `ln ‖z(k)‖` over
    /// the second half of the run; certified viruses only.
    pub fitted_gamma: Option<f64>,
    pub eradicated: bool,
    pub persistent: bool,
    pub expected: Option<Outcome>,
    pub matches_expected: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub steps: usize,
    pub horizon: Horizon,
    pub stopped_early: bool,
    pub h: f64,
    pub viruses: Vec<VirusSummary>,
    /// `None` when the experiment states no expectations.
    pub expectations_met: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub virus: usize,
    pub quantity: ReferenceQuantity,
    pub relation: Relation,
    pub reference: f64,
    pub computed: f64,
    pub discrepancy: f64,
    pub relative_discrepancy: f64,
    /// Agreement within [`CALIBRATION_TOL`] (or the bound holds).
    pub consistent: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub topology: Option<String>,
    pub rows: Vec<CalibrationRow>,
}

/// Everything one run produces. The CSV text is kept out of the JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bundle {
    pub name: String,
    pub seed: u64,
    pub assumptions: AssumptionReport,
    /// Certificates attempted per virus; the last one carries the verdict.
    pub certificates: Vec<Vec<Certificate>>,
    pub summary: Option<Summary>,
    pub calibration: Calibration,
    #[serde(skip)]
    pub csv: Option<String>,
}

impl Bundle {
    pub fn final_certificates(&self) -> impl Iterator<Item = &Certificate> {
        self.certificates.iter().filter_map(|a| a.last())
    }

    pub fn file_stem(&self) -> String {
        format!("{}_{}", self.name, self.seed)
    }

    /// Writes `<name>_<seed>.json` and, after a rollout, `<name>_<seed>.csv`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let json = dir.join(format!("{}.json", self.file_stem()));
        fs::write(&json, serde_json::to_string_pretty(self)? + "\n")?;
        written.push(json);
        if let Some(csv) = &self.csv {
            let path = dir.join(format!("{}.csv", self.file_stem()));
            fs::write(&path, csv)?;
            written.push(path);
        }
        Ok(written)
    }
}

/// `exp` of the least-squares slope of `ln v` against `k` over the second
/// half of the positive entries of `series`.
pub fn fit_decay_factor(series: &[f64]) -> Option<f64> {
    let half = series.len() / 2;
    let points: Vec<(f64, f64)> = series
        .iter()
        .enumerate()
        .skip(half)
        .filter(|(_, v)| **v > 0.0 && v.is_finite())
        .map(|(k, v)| (k as f64, v.ln()))
        .collect();
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let (mk, mv) = points.iter().fold((0.0, 0.0), |(a, b), (k, v)| (a + k / n, b + v / n));
    let (num, den) = points.iter().fold((0.0, 0.0), |(num, den), (k, v)| {
        (num + (k - mk) * (v - mv), den + (k - mk) * (k - mk))
    });
    (den > 0.0).then(|| (num / den).exp())
}

pub fn calibrate(
    schedule: &ParameterSchedule,
    reference: &[ReferenceValue],
    topology: Option<String>,
    sigma: f64,
) -> Result<Calibration, ExperimentError> {
    let mut rows = Vec::with_capacity(reference.len());
    for rv in reference {
        let r = rv.virus - 1;
        let computed = match rv.quantity {
            ReferenceQuantity::Rho => {
                let frame = &schedule.virus(r).map_err(StabilityError::from)?.frames()[0];
                let sys = assemble(frame, schedule.shape()).map_err(StabilityError::from)?;
                spectral_radius_nonneg(&sys.m_f, DEFAULT_TOL).map_err(StabilityError::from)?
            }
            quantity => {
                let cover = schedule.virus(r).map_err(StabilityError::from)?.cover();
                let (c, _) = slow_variation_constants(schedule, r, cover, sigma)?;
                match quantity {
                    ReferenceQuantity::NormBound => c.l,
                    ReferenceQuantity::KappaObs => c.kappa_obs,
                    _ => c.alpha1,
                }
            }
        };
        let discrepancy = computed - rv.value;
        let consistent = match rv.relation {
            Relation::Eq => discrepancy.abs() <= CALIBRATION_TOL,
            Relation::Le => computed <= rv.value + CALIBRATION_TOL,
        };
        rows.push(CalibrationRow {
            virus: rv.virus,
            quantity: rv.quantity,
            relation: rv.relation,
            reference: rv.value,
            computed,
            discrepancy,
            relative_discrepancy: discrepancy / rv.value,
            consistent,
        });
    }
    Ok(Calibration { topology, rows })
}

/// Runs checks and certification, then (if the checks pass) the rollout.
pub fn run_experiment(experiment: &Experiment) -> Result<Bundle, ExperimentError> {
    let schedule = &experiment.schedule;
    let initial = experiment.initial_state()?;
    let cover = schedule.joint_cover();
    let assumptions = check_all(schedule, &initial, cover);
    let calibration = calibrate(
        schedule,
        &experiment.reference,
        experiment.topology.clone(),
        experiment.sigma,
    )?;
    let mut bundle = Bundle {
        name: experiment.name.clone(),
        seed: experiment.seed,
        assumptions,
        certificates: Vec::new(),
        summary: None,
        calibration,
        csv: None,
    };
    if !bundle.assumptions.passed() {
        return Ok(bundle);
    }
    let m = schedule.shape().m;
    for r in 0..m {
        bundle
            .certificates
            .push(certify_auto(schedule, r, cover, experiment.sigma)?);
    }
    let certified: Vec<bool> = bundle.final_certificates().map(Certificate::is_certified).collect();

    let mut csv = TrajectoryCsv::new(schedule.shape(), experiment.per_node);
    csv.push(0, &initial);
    let x0: Vec<f64> = (0..m).map(|r| initial.xbar(r)).collect();
    let w0: Vec<f64> = (0..m).map(|r| initial.wbar(r)).collect();
    let (min_steps, adaptive) = match experiment.horizon {
        Horizon::Adaptive { min_steps, .. } => (min_steps, true),
        Horizon::Fixed { .. } => (0, false),
    };
    let stride = experiment.stride.max(1);
    let cap = experiment.step_cap();
    let mut last_written = 0;
    let decayed =
        |r: usize, s: &LayeredState| s.xbar(r) <= ERADICATION_RATIO * x0[r] && s.wbar(r) <= ERADICATION_RATIO * w0[r];
    let trajectory: Trajectory = rollout_until(schedule, &initial, cap, false, |k, s| {
        let stop = adaptive && k >= min_steps && (0..m).all(|r| !certified[r] || decayed(r, s));
        if k % stride == 0 || stop || k == cap {
            csv.push(k, s);
            last_written = k;
        }
        stop
    })?;
    let steps = trajectory.len() - 1;
    if last_written != steps {
        csv.push(steps, trajectory.last());
    }

    let last = trajectory.last();
    let expected = experiment.expected.as_ref();
    let viruses: Vec<VirusSummary> = (0..m)
        .map(|r| {
            let cert = bundle.certificates[r].last().expect("one attempt per virus");
            let (xf, wf) = (last.xbar(r), last.wbar(r));
            let ratio = (x0[r] > 0.0).then(|| xf / x0[r]);
            let eradicated = decayed(r, last);
            let persistent = ratio.is_some_and(|q| q >= PERSISTENCE_RATIO);
            let exp = expected.map(|e| e[r]);
            let matches = exp.map(|e| match e {
                Outcome::Eradicated => cert.is_certified() && eradicated,
                Outcome::Persistent => !cert.is_certified() && persistent,
            });
            VirusSummary {
                virus: r + 1,
                certificate: cert.kind.to_string(),
                certified: cert.is_certified(),
                xbar_initial: x0[r],
                wbar_initial: w0[r],
                xbar_final: xf,
                wbar_final: wf,
                xbar_ratio: ratio,
                fitted_gamma: if cert.is_certified() {
                    fit_decay_factor(&trajectory.norm_series(r))
                } else {
                    None
                },
                eradicated,
                persistent,
                expected: exp,
                matches_expected: matches,
            }
        })
        .collect();
    let expectations_met = expected.map(|_| viruses.iter().all(|v| v.matches_expected == Some(true)));
    bundle.summary = Some(Summary {
        steps,
        horizon: experiment.horizon,
        stopped_early: steps < cap,
        h: schedule.shape().h,
        viruses,
        expectations_met,
    });
    bundle.csv = Some(csv.finish());
    Ok(bundle)
}
