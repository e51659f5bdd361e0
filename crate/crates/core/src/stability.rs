//! Eradication certificates for one virus and the Lyapunov decrease audit.
//!
//! A certificate pairs a verdict with the spectral data it rests on and a
//! re-verifiable quadratic witness `V(z) = zᵀ P z`.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::assumptions::{check_irreducibility, check_schedule, AssumptionId, AssumptionReport};
use crate::dynamics::{assemble, AssembledSystem, LayeredState};
use crate::error::StabilityError;
use crate::linalg::{
    induced2_norm, perron_vectors, solve_discrete_lyapunov, spectral_radius_nonneg, symmetric_eigen_extrema,
    DenseMatrix, LyapunovSolution, DEFAULT_TOL,
};
use crate::model::{ParameterSchedule, SystemShape, VirusLayerParams};
use crate::num;

/// A spectral radius counts as below one only if it is at most `1 − STRICT_MARGIN`.
pub const STRICT_MARGIN: f64 = 1e-9;
/// All-ones perturbation used to obtain positive Perron vectors of
/// reducible matrices.
pub const PERRON_EPS: f64 = 1e-9;
/// Relative slack for the structural equalities.
pub const STRUCTURE_SLACK: f64 = 1e-12;
pub const DEFAULT_SIGMA: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    /// Constant parameters, `ρ(M_f) < 1`.
    TimeInvariant,
    /// Homogeneous rates and symmetric couplings, `sup_k ρ(M_f(k)) < 1`.
    HomogeneousSymmetric,
    /// Heterogeneous, slowly varying parameters with the explicit `κ*` budget.
    SlowVariation,
    /// Entrywise maximum `M̄` of all frames with `ρ(M̄) < 1`; one diagonal
    /// `P` built from `M̄` serves every frame.
    CommonDiagonal,
}

impl fmt::Display for CertificateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::TimeInvariant => "time-invariant",
            Self::HomogeneousSymmetric => "homogeneous symmetric",
            Self::SlowVariation => "slow variation",
            Self::CommonDiagonal => "common diagonal envelope",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Certified,
    NotCertified,
    Inapplicable,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Certified => "certified",
            Self::NotCertified => "not certified",
            Self::Inapplicable => "inapplicable",
        })
    }
}

/// Structural conditions of the homogeneous symmetric certificate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructuralCondition {
    HomogeneousInfection,
    HomogeneousHealing,
    SymmetricContacts,
    ExposureMatchesShedding,
    SymmetricTransfers,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reason {
    AssumptionsFailed {
        failed: Vec<AssumptionId>,
    },
    ScheduleVaries,
    SpectralRadius {
        rho: f64,
    },
    Structure {
        failed: Vec<StructuralCondition>,
    },
    VariationBound {
        kappa_obs: f64,
        kappa_star: f64,
    },
    /// The Perron-ratio diagonal failed verification; a series solution
    /// of the Lyapunov equation was used instead.
    DiagonalWitnessFallback {
        lambda_max: f64,
    },
    WitnessUnverified {
        lambda_max: f64,
    },
}

/// Spectral radii of the examined frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralData {
    /// Largest radius (the envelope radius for [`CertificateKind::CommonDiagonal`]).
    pub rho: f64,
    /// Radius per examined frame, in frame order.
    pub per_frame: Vec<f64>,
    /// `1 − rho`.
    pub margin: f64,
}

impl SpectralData {
    fn new(per_frame: Vec<f64>) -> Self {
        let rho = per_frame.iter().copied().fold(0.0, f64::max);
        Self {
            rho,
            per_frame,
            margin: 1.0 - rho,
        }
    }
}

/// Quadratic witness `V(z) = zᵀ P z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    /// Positive diagonal `P`, valid for every examined frame.
    Diagonal { p: Vec<f64>, lambda_max: f64 },
    /// `P = I`.
    Identity { lambda_max: f64 },
    /// One series solution `Q` per frame index (`None` for frames that
    /// were not examined).
    Lyapunov {
        solutions: Vec<Option<LyapunovSolution>>,
        lambda_max: f64,
    },
}

impl Witness {
    /// `P` for frame index `frame`.
    pub fn matrix(&self, frame: usize, dim: usize) -> Option<DenseMatrix> {
        match self {
            Self::Diagonal { p, .. } => Some(DenseMatrix::from_diagonal(p)),
            Self::Identity { .. } => Some(DenseMatrix::identity(dim)),
            Self::Lyapunov { solutions, .. } => solutions.get(frame)?.as_ref().map(|s| s.q.clone()),
        }
    }

    /// The stored `λ_max` bound.
    pub fn lambda_max(&self) -> f64 {
        match self {
            Self::Diagonal { lambda_max, .. } | Self::Identity { lambda_max } | Self::Lyapunov { lambda_max, .. } => {
                *lambda_max
            }
        }
    }

    /// Recomputes `max_k λ_max(M_kᵀ P_k M_k − P_k)` over the given frame
    /// matrices (indexed like the schedule's frames).
    pub fn verify(&self, matrices: &[Option<DenseMatrix>]) -> Result<f64, StabilityError> {
        let mut worst = f64::NEG_INFINITY;
        for (k, m) in matrices.iter().enumerate() {
            let Some(m) = m else { continue };
            let Some(p) = self.matrix(k, m.rows()) else { continue };
            worst = worst.max(lyapunov_gap(m, &p)?);
        }
        Ok(worst)
    }
}

/// `λ_max(MᵀPM − P)`.
pub fn lyapunov_gap(m: &DenseMatrix, p: &DenseMatrix) -> Result<f64, StabilityError> {
    let s = m.transpose().mul(p).mul(m).sub(p)?.symmetrized();
    Ok(symmetric_eigen_extrema(&s, DEFAULT_TOL)?.1)
}

/// Outcome of the structural gate, conjoined over the examined frames.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuralConditions {
    pub homogeneous_infection: bool,
    pub homogeneous_healing: bool,
    pub symmetric_contacts: bool,
    pub exposure_matches_shedding: bool,
    pub symmetric_transfers: bool,
}

impl StructuralConditions {
    pub fn of_frame(f: &VirusLayerParams) -> Self {
        let close = |a: f64, b: f64| num::abs(a - b) <= STRUCTURE_SLACK * a.abs().max(b.abs()).max(1.0);
        let all_equal = |v: &[f64]| v.iter().all(|&x| close(x, v[0]));
        let symmetric = |m: &DenseMatrix| (0..m.rows()).all(|i| (0..i).all(|j| close(m[(i, j)], m[(j, i)])));
        let (n, q) = (f.n(), f.q());
        Self {
            homogeneous_infection: all_equal(f.beta()),
            homogeneous_healing: all_equal(f.delta()),
            symmetric_contacts: symmetric(f.adjacency()),
            exposure_matches_shedding: (0..n).all(|i| (0..q).all(|j| close(f.beta_w()[(i, j)], f.c_w()[(j, i)]))),
            symmetric_transfers: symmetric(f.alpha_w()),
        }
    }

    fn and(&self, other: &Self) -> Self {
        Self {
            homogeneous_infection: self.homogeneous_infection && other.homogeneous_infection,
            homogeneous_healing: self.homogeneous_healing && other.homogeneous_healing,
            symmetric_contacts: self.symmetric_contacts && other.symmetric_contacts,
            exposure_matches_shedding: self.exposure_matches_shedding && other.exposure_matches_shedding,
            symmetric_transfers: self.symmetric_transfers && other.symmetric_transfers,
        }
    }

    pub fn failed(&self) -> Vec<StructuralCondition> {
        [
            (self.homogeneous_infection, StructuralCondition::HomogeneousInfection),
            (self.homogeneous_healing, StructuralCondition::HomogeneousHealing),
            (self.symmetric_contacts, StructuralCondition::SymmetricContacts),
            (
                self.exposure_matches_shedding,
                StructuralCondition::ExposureMatchesShedding,
            ),
            (self.symmetric_transfers, StructuralCondition::SymmetricTransfers),
        ]
        .into_iter()
        .filter(|(ok, _)| !ok)
        .map(|(_, c)| c)
        .collect()
    }

    pub fn hold(&self) -> bool {
        self.failed().is_empty()
    }
}

/// Constants of the slow-variation budget `κ*`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaBound {
    pub dim: usize,
    pub alpha1: f64,
    pub l: f64,
    pub sigma: f64,
    pub mu: f64,
    pub p1: f64,
    /// `m₁`, `None` when it overflows `f64`.
    pub m1: Option<f64>,
    pub ln_m1: f64,
    /// `κ*`, possibly underflowed to zero; see [`Self::ln_kappa_star`].
    pub kappa_star: f64,
    pub ln_kappa_star: f64,
}

impl KappaBound {
    pub fn log10_kappa_star(&self) -> f64 {
        self.ln_kappa_star / core::f64::consts::LN_10
    }
}

/// `μ = (1 − α₁)/2`, `p₁ = 1 − μ`,
/// `m₁ = ((1 − μ)/μ^N)(1 − μ + L)^(N−1)`,
/// `κ* = (1 − p₁²)² (1 − σ) / (2 m₁⁴ L)`, evaluated in log space.
pub fn kappa_bound(alpha1: f64, l: f64, dim: usize, sigma: f64) -> Result<KappaBound, StabilityError> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(StabilityError::BadSigma(sigma));
    }
    if !(0.0..1.0).contains(&alpha1) {
        return Err(StabilityError::BadConstants("alpha1 must lie in [0, 1)"));
    }
    if !(l > 0.0 && l.is_finite()) {
        return Err(StabilityError::BadConstants("L must be positive and finite"));
    }
    if dim == 0 {
        return Err(StabilityError::BadConstants("dimension must be positive"));
    }
    let mu = 0.5 * (1.0 - alpha1);
    let p1 = 1.0 - mu;
    let nf = dim as f64;
    let ln_m1 = num::ln(1.0 - mu) - nf * num::ln(mu) + (nf - 1.0) * num::ln(1.0 - mu + l);
    let m1 = num::exp(ln_m1);
    let ln_kappa_star =
        2.0 * num::ln(1.0 - p1 * p1) - core::f64::consts::LN_2 - 4.0 * ln_m1 - num::ln(l) + num::ln(1.0 - sigma);
    Ok(KappaBound {
        dim,
        alpha1,
        l,
        sigma,
        mu,
        p1,
        m1: m1.is_finite().then_some(m1),
        ln_m1,
        kappa_star: num::exp(ln_kappa_star),
        ln_kappa_star,
    })
}

/// Observed constants of a time-varying schedule plus the admissible budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlowVariationConstants {
    /// `sup_k ρ(M_f(k))`.
    pub alpha1: f64,
    /// `sup_k ‖M_f(k)‖₂`.
    pub l: f64,
    /// `sup_k ‖M_f(k+1) − M_f(k)‖₂` over the examined instants.
    pub kappa_obs: f64,
    pub sigma: f64,
    /// `None` when `α₁ ≥ 1` and the budget is undefined.
    pub bound: Option<KappaBound>,
    /// `log10(κ_obs / κ*)`; `None` when `κ_obs = 0` or no budget exists.
    pub log10_conservatism: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    #[serde(with = "crate::assumptions::one_based")]
    pub virus: usize,
    pub kind: CertificateKind,
    pub verdict: Verdict,
    pub reasons: Vec<Reason>,
    pub spectral: Option<SpectralData>,
    pub witness: Option<Witness>,
    pub structure: Option<StructuralConditions>,
    pub slow: Option<SlowVariationConstants>,
    pub assumptions: AssumptionReport,
}

impl Certificate {
    fn new(virus: usize, kind: CertificateKind, assumptions: AssumptionReport) -> Self {
        Self {
            virus,
            kind,
            verdict: Verdict::Inapplicable,
            reasons: Vec::new(),
            spectral: None,
            witness: None,
            structure: None,
            slow: None,
            assumptions,
        }
    }

    pub fn is_certified(&self) -> bool {
        self.verdict == Verdict::Certified
    }

    /// Re-evaluates the witness against the schedule's frames.
    pub fn verify_witness(&self, schedule: &ParameterSchedule) -> Result<Option<f64>, StabilityError> {
        let Some(w) = &self.witness else { return Ok(None) };
        let mats = frame_matrices(schedule, self.virus, None)?;
        Ok(Some(w.verify(&mats)?))
    }
}

/// `M_f` of every frame of virus `r`; frames outside `only` are `None`.
fn frame_matrices(
    schedule: &ParameterSchedule,
    r: usize,
    only: Option<&[usize]>,
) -> Result<Vec<Option<DenseMatrix>>, StabilityError> {
    let v = schedule.virus(r)?;
    let shape = schedule.shape();
    v.frames()
        .iter()
        .enumerate()
        .map(|(i, f)| {
            if only.is_some_and(|o| !o.contains(&i)) {
                Ok(None)
            } else {
                Ok(Some(assemble(f, shape)?.m_f))
            }
        })
        .collect()
}

fn gate(cert: &mut Certificate) -> bool {
    let failed: Vec<AssumptionId> = cert.assumptions.failed().collect();
    if failed.is_empty() {
        true
    } else {
        cert.reasons.push(Reason::AssumptionsFailed { failed });
        false
    }
}

fn below_one(rho: f64) -> bool {
    rho <= 1.0 - STRICT_MARGIN
}

/// Diagonal `P` from the Perron vectors of `envelope`, verified on every
/// given matrix. Returns `(p, λ_max)`.
fn diagonal_witness(envelope: &DenseMatrix, mats: &[Option<DenseMatrix>]) -> Result<(Vec<f64>, f64), StabilityError> {
    let pair = perron_vectors(envelope, PERRON_EPS, DEFAULT_TOL)?;
    let mut p: Vec<f64> = pair.left.iter().zip(&pair.right).map(|(u, v)| u / v).collect();
    let pmax = p.iter().copied().fold(0.0, f64::max);
    p.iter_mut().for_each(|x| *x /= pmax);
    let lambda = Witness::Diagonal {
        p: p.clone(),
        lambda_max: 0.0,
    }
    .verify(mats)?;
    Ok((p, lambda))
}

/// Attaches a diagonal witness, or a series witness per examined frame
/// when the diagonal fails verification.
fn attach_witness(
    cert: &mut Certificate,
    envelope: &DenseMatrix,
    mats: &[Option<DenseMatrix>],
) -> Result<(), StabilityError> {
    let (p, lambda) = diagonal_witness(envelope, mats)?;
    if lambda < 0.0 {
        cert.witness = Some(Witness::Diagonal { p, lambda_max: lambda });
        return Ok(());
    }
    cert.reasons
        .push(Reason::DiagonalWitnessFallback { lambda_max: lambda });
    cert.witness = Some(series_witness(mats)?);
    Ok(())
}

fn series_witness(mats: &[Option<DenseMatrix>]) -> Result<Witness, StabilityError> {
    let solutions = mats
        .iter()
        .map(|m| m.as_ref().map(|m| solve_discrete_lyapunov(m, DEFAULT_TOL)).transpose())
        .collect::<Result<Vec<_>, _>>()?;
    let mut w = Witness::Lyapunov {
        solutions,
        lambda_max: 0.0,
    };
    let lambda = w.verify(mats)?;
    if let Witness::Lyapunov { lambda_max, .. } = &mut w {
        *lambda_max = lambda;
    }
    Ok(w)
}

/// Constant parameters: certified iff `ρ(M_f) < 1`.
pub fn certify_ti(schedule: &ParameterSchedule, r: usize) -> Result<Certificate, StabilityError> {
    let report = check_schedule(schedule, schedule.joint_cover());
    certify_ti_with(schedule, r, report)
}

fn certify_ti_with(
    schedule: &ParameterSchedule,
    r: usize,
    report: AssumptionReport,
) -> Result<Certificate, StabilityError> {
    let v = schedule.virus(r)?;
    let mut cert = Certificate::new(r, CertificateKind::TimeInvariant, report);
    if !v.is_effectively_constant() {
        cert.reasons.push(Reason::ScheduleVaries);
        return Ok(cert);
    }
    if !gate(&mut cert) {
        return Ok(cert);
    }
    let mats = frame_matrices(schedule, r, Some(&[0]))?;
    let m_f = mats[0].clone().expect("frame 0 examined");
    let rho = spectral_radius_nonneg(&m_f, DEFAULT_TOL)?;
    cert.spectral = Some(SpectralData::new(alloc::vec![rho]));
    if below_one(rho) {
        cert.verdict = Verdict::Certified;
        attach_witness(&mut cert, &m_f, &mats)?;
    } else {
        cert.verdict = Verdict::NotCertified;
        cert.reasons.push(Reason::SpectralRadius { rho });
    }
    Ok(cert)
}

/// Disease-free equilibrium: certified iff every virus is.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DfeCertificate {
    pub certified: bool,
    pub viruses: Vec<Certificate>,
}

pub fn certify_dfe(schedule: &ParameterSchedule) -> Result<DfeCertificate, StabilityError> {
    let report = check_schedule(schedule, schedule.joint_cover());
    let viruses = (0..schedule.shape().m)
        .map(|r| certify_ti_with(schedule, r, report.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DfeCertificate {
        certified: viruses.iter().all(Certificate::is_certified),
        viruses,
    })
}

/// Radii with and without the resource layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReproductionComparison {
    /// `ρ(M_f)`.
    pub rho_full: f64,
    /// `ρ(M)` with `M = I − hD + hB` on the individuals only.
    pub rho_individual: f64,
    /// Whether `B_f` is irreducible; the strict ordering is guaranteed
    /// only then.
    pub irreducible: bool,
    pub ordering_holds: bool,
    pub assumptions: AssumptionReport,
}

pub fn reproduction_comparison(
    frame: &VirusLayerParams,
    shape: &SystemShape,
) -> Result<ReproductionComparison, StabilityError> {
    let sys: AssembledSystem = assemble(frame, shape)?;
    let rho_full = spectral_radius_nonneg(&sys.m_f, DEFAULT_TOL)?;
    let rho_individual = spectral_radius_nonneg(&sys.m_individual(), DEFAULT_TOL)?;
    let assumptions = check_irreducibility(frame, shape);
    Ok(ReproductionComparison {
        rho_full,
        rho_individual,
        irreducible: assumptions.passed(),
        ordering_holds: rho_full > rho_individual,
        assumptions,
    })
}

/// Homogeneous rates and symmetric couplings on every frame:
/// certified iff `sup_k ρ(M_f(k)) < 1`, with witness `P = I`.
pub fn certify_tv_homogeneous(schedule: &ParameterSchedule, r: usize) -> Result<Certificate, StabilityError> {
    let report = check_schedule(schedule, schedule.joint_cover());
    certify_tv_homogeneous_with(schedule, r, report)
}

fn certify_tv_homogeneous_with(
    schedule: &ParameterSchedule,
    r: usize,
    report: AssumptionReport,
) -> Result<Certificate, StabilityError> {
    let v = schedule.virus(r)?;
    let mut cert = Certificate::new(r, CertificateKind::HomogeneousSymmetric, report);
    let distinct = v.distinct_frames();
    let structure = distinct
        .iter()
        .map(|&i| StructuralConditions::of_frame(&v.frames()[i]))
        .reduce(|a, b| a.and(&b))
        .expect("schedules have a frame");
    let failed = structure.failed();
    cert.structure = Some(structure);
    if !failed.is_empty() {
        cert.reasons.push(Reason::Structure { failed });
        return Ok(cert);
    }
    if !gate(&mut cert) {
        return Ok(cert);
    }
    let mats = frame_matrices(schedule, r, Some(&distinct))?;
    let radii = mats
        .iter()
        .flatten()
        .map(|m| spectral_radius_nonneg(m, DEFAULT_TOL))
        .collect::<Result<Vec<_>, _>>()?;
    let spectral = SpectralData::new(radii);
    let rho = spectral.rho;
    cert.spectral = Some(spectral);
    if below_one(rho) {
        cert.verdict = Verdict::Certified;
        let lambda = Witness::Identity { lambda_max: 0.0 }.verify(&mats)?;
        cert.witness = Some(Witness::Identity { lambda_max: lambda });
        if lambda >= 0.0 {
            cert.reasons.push(Reason::WitnessUnverified { lambda_max: lambda });
        }
    } else {
        cert.verdict = Verdict::NotCertified;
        cert.reasons.push(Reason::SpectralRadius { rho });
    }
    Ok(cert)
}

/// Slowly varying heterogeneous parameters: certified iff `α₁ < 1` and the
/// observed variation `κ_obs` is within the budget `κ*`.
pub fn certify_tv_slow(
    schedule: &ParameterSchedule,
    r: usize,
    horizon: usize,
    sigma: f64,
) -> Result<Certificate, StabilityError> {
    let report = check_schedule(schedule, horizon);
    certify_tv_slow_with(schedule, r, horizon, sigma, report)
}

/// Observed `α₁`, `L` and `κ_obs` over instants `k < min(horizon, cover)`.
pub fn slow_variation_constants(
    schedule: &ParameterSchedule,
    r: usize,
    horizon: usize,
    sigma: f64,
) -> Result<(SlowVariationConstants, Vec<Option<DenseMatrix>>), StabilityError> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(StabilityError::BadSigma(sigma));
    }
    let v = schedule.virus(r)?;
    let instants = horizon.max(1).min(v.cover());
    let mut examined: Vec<usize> = (0..=instants).map(|k| v.frame_index(k)).collect();
    examined.sort_unstable();
    examined.dedup();
    let mats = frame_matrices(schedule, r, Some(&examined))?;
    let (mut alpha1, mut l): (f64, f64) = (0.0, 0.0);
    for m in mats.iter().flatten() {
        alpha1 = alpha1.max(spectral_radius_nonneg(m, DEFAULT_TOL)?);
        l = l.max(induced2_norm(m, DEFAULT_TOL)?);
    }
    let mut kappa_obs: f64 = 0.0;
    for k in 0..instants {
        let (a, b) = (v.frame_index(k), v.frame_index(k + 1));
        if a != b {
            let (ma, mb) = (mats[a].as_ref().expect("examined"), mats[b].as_ref().expect("examined"));
            kappa_obs = kappa_obs.max(induced2_norm(&mb.sub(ma)?, DEFAULT_TOL)?);
        }
    }
    let dim = schedule.shape().dim();
    let bound = if alpha1 < 1.0 {
        Some(kappa_bound(alpha1, l, dim, sigma)?)
    } else {
        None
    };
    let log10_conservatism = match &bound {
        Some(b) if kappa_obs > 0.0 => Some(num::log10(kappa_obs) - b.log10_kappa_star()),
        _ => None,
    };
    Ok((
        SlowVariationConstants {
            alpha1,
            l,
            kappa_obs,
            sigma,
            bound,
            log10_conservatism,
        },
        mats,
    ))
}

fn certify_tv_slow_with(
    schedule: &ParameterSchedule,
    r: usize,
    horizon: usize,
    sigma: f64,
    report: AssumptionReport,
) -> Result<Certificate, StabilityError> {
    let mut cert = Certificate::new(r, CertificateKind::SlowVariation, report);
    let (constants, mats) = slow_variation_constants(schedule, r, horizon, sigma)?;
    let radii = mats
        .iter()
        .flatten()
        .map(|m| spectral_radius_nonneg(m, DEFAULT_TOL))
        .collect::<Result<Vec<_>, _>>()?;
    cert.spectral = Some(SpectralData::new(radii));
    let alpha1 = constants.alpha1;
    let kappa_obs = constants.kappa_obs;
    let kappa_star = constants.bound.as_ref().map(|b| b.kappa_star);
    cert.slow = Some(constants);
    if !gate(&mut cert) {
        return Ok(cert);
    }
    cert.verdict = Verdict::NotCertified;
    if !below_one(alpha1) {
        cert.reasons.push(Reason::SpectralRadius { rho: alpha1 });
        return Ok(cert);
    }
    let kappa_star = kappa_star.expect("budget exists below one");
    if kappa_obs > kappa_star {
        cert.reasons.push(Reason::VariationBound { kappa_obs, kappa_star });
        return Ok(cert);
    }
    cert.verdict = Verdict::Certified;
    cert.witness = Some(series_witness(&mats)?);
    Ok(cert)
}

/// Certified iff `ρ(M̄) < 1` for the entrywise maximum `M̄` over the
/// frames; the diagonal `P` of `M̄` then satisfies `MᵀPM − P ≺ 0` for
/// every frame and every nonnegative `M ≤ M̄`.
pub fn certify_envelope(schedule: &ParameterSchedule, r: usize) -> Result<Certificate, StabilityError> {
    let report = check_schedule(schedule, schedule.joint_cover());
    certify_envelope_with(schedule, r, report)
}

fn certify_envelope_with(
    schedule: &ParameterSchedule,
    r: usize,
    report: AssumptionReport,
) -> Result<Certificate, StabilityError> {
    let v = schedule.virus(r)?;
    let mut cert = Certificate::new(r, CertificateKind::CommonDiagonal, report);
    if !gate(&mut cert) {
        return Ok(cert);
    }
    let distinct = v.distinct_frames();
    let mats = frame_matrices(schedule, r, Some(&distinct))?;
    let mut envelope: Option<DenseMatrix> = None;
    let mut per_frame = Vec::new();
    for m in mats.iter().flatten() {
        per_frame.push(spectral_radius_nonneg(m, DEFAULT_TOL)?);
        envelope = Some(match envelope {
            None => m.clone(),
            Some(e) => e.max_entrywise(m)?,
        });
    }
    let envelope = envelope.expect("schedules have a frame");
    let rho = spectral_radius_nonneg(&envelope, DEFAULT_TOL)?;
    cert.spectral = Some(SpectralData {
        rho,
        per_frame,
        margin: 1.0 - rho,
    });
    if !below_one(rho) {
        cert.verdict = Verdict::NotCertified;
        cert.reasons.push(Reason::SpectralRadius { rho });
        return Ok(cert);
    }
    let (p, lambda) = diagonal_witness(&envelope, &mats)?;
    cert.witness = Some(Witness::Diagonal { p, lambda_max: lambda });
    if lambda < 0.0 {
        cert.verdict = Verdict::Certified;
    } else {
        cert.verdict = Verdict::NotCertified;
        cert.reasons.push(Reason::WitnessUnverified { lambda_max: lambda });
    }
    Ok(cert)
}

/// Strongest applicable certificate for virus `r`, with the attempts that
/// led to it. Order: constant parameters use the time-invariant test;
/// otherwise the homogeneous symmetric test when its structure holds,
/// then the slow-variation test; if that fails only on the `κ*` budget,
/// the common-diagonal envelope. The last entry carries the verdict.
pub fn certify_auto(
    schedule: &ParameterSchedule,
    r: usize,
    horizon: usize,
    sigma: f64,
) -> Result<Vec<Certificate>, StabilityError> {
    let v = schedule.virus(r)?;
    let report = check_schedule(schedule, horizon.max(schedule.joint_cover()));
    if v.is_effectively_constant() {
        return Ok(alloc::vec![certify_ti_with(schedule, r, report)?]);
    }
    let mut attempts = Vec::new();
    let homogeneous = certify_tv_homogeneous_with(schedule, r, report.clone())?;
    let structural_ok = homogeneous.structure.as_ref().is_some_and(StructuralConditions::hold);
    attempts.push(homogeneous);
    if structural_ok {
        return Ok(attempts);
    }
    let slow = certify_tv_slow_with(schedule, r, horizon, sigma, report.clone())?;
    let bound_only = slow.verdict == Verdict::NotCertified
        && slow.reasons.iter().all(|x| matches!(x, Reason::VariationBound { .. }));
    attempts.push(slow);
    if bound_only {
        attempts.push(certify_envelope_with(schedule, r, report)?);
    }
    Ok(attempts)
}

/// Every certificate for virus `r`, whether or not it applies.
pub fn certify_all(
    schedule: &ParameterSchedule,
    r: usize,
    horizon: usize,
    sigma: f64,
) -> Result<Vec<Certificate>, StabilityError> {
    let report = check_schedule(schedule, horizon.max(schedule.joint_cover()));
    Ok(alloc::vec![
        certify_ti_with(schedule, r, report.clone())?,
        certify_tv_homogeneous_with(schedule, r, report.clone())?,
        certify_tv_slow_with(schedule, r, horizon, sigma, report.clone())?,
        certify_envelope_with(schedule, r, report)?,
    ])
}

/// Findings of [`lyapunov_decrease_audit`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    #[serde(with = "crate::assumptions::one_based")]
    pub virus: usize,
    /// Steps whose starting state was nonzero.
    pub steps_checked: usize,
    /// Instants `k` at which `V(z(k+1)) − V(z(k)) ≥ 0` from a nonzero `z(k)`.
    pub violations: Vec<usize>,
    pub violation_count: usize,
    /// Largest observed `V(z(k+1)) / V(z(k))`.
    pub worst_ratio: Option<f64>,
    pub passed: bool,
    pub note: Option<String>,
}

/// Evaluates `V_k(z) = zᵀ P_k z` along consecutive states (`states[k]` is
/// the state at instant `k`) and checks `ΔV < 0` at every nonzero state.
pub fn lyapunov_decrease_audit(
    schedule: &ParameterSchedule,
    states: &[LayeredState],
    r: usize,
    cert: &Certificate,
) -> AuditReport {
    let mut report = AuditReport {
        virus: r,
        steps_checked: 0,
        violations: Vec::new(),
        violation_count: 0,
        worst_ratio: None,
        passed: true,
        note: None,
    };
    let Some(witness) = &cert.witness else {
        report.note = Some(String::from("certificate carries no witness"));
        return report;
    };
    let Ok(v) = schedule.virus(r) else {
        report.passed = false;
        report.note = Some(String::from("virus out of range"));
        return report;
    };
    let dim = schedule.shape().dim();
    for (k, pair) in states.windows(2).enumerate() {
        let z0 = pair[0].z(r);
        if z0.iter().all(|&x| x == 0.0) {
            continue;
        }
        let Some(p) = witness.matrix(v.frame_index(k), dim) else {
            report.note = Some(String::from("witness missing for an instant's frame"));
            report.passed = false;
            continue;
        };
        let p_next = witness.matrix(v.frame_index(k + 1), dim).unwrap_or_else(|| p.clone());
        // V is homogeneous of degree two, so rescaling both states by
        // max|z(k)| keeps the comparison exact and avoids underflow.
        let scale = z0.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let unit = |z: &[f64]| -> Vec<f64> { z.iter().map(|x| x / scale).collect() };
        let (v0, v1) = (
            p.quadratic_form(&unit(&z0)),
            p_next.quadratic_form(&unit(&pair[1].z(r))),
        );
        report.steps_checked += 1;
        if v0 > 0.0 {
            let ratio = v1 / v0;
            if report.worst_ratio.is_none_or(|w| ratio > w) {
                report.worst_ratio = Some(ratio);
            }
        }
        if !(v1 - v0 < 0.0) {
            report.violation_count += 1;
            if report.violations.len() < crate::assumptions::MAX_OFFENDERS {
                report.violations.push(k);
            }
        }
    }
    report.passed &= report.violation_count == 0;
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::rollout;
    use crate::model::{FrameData, VirusSchedule};
    use alloc::vec;

    fn toy_frame(beta: f64) -> VirusLayerParams {
        VirusLayerParams::new(
            FrameData {
                beta: vec![beta],
                delta: vec![1.0],
                adjacency: DenseMatrix::identity(1),
                beta_w: DenseMatrix::filled(1, 1, 0.4),
                c_w: DenseMatrix::filled(1, 1, 0.6),
                alpha_w: DenseMatrix::zeros(1, 1),
                delta_w: vec![1.0],
                w_max: 1.0,
            },
            1,
            1,
        )
        .unwrap()
    }

    fn toy() -> ParameterSchedule {
        ParameterSchedule::constant(SystemShape::new(1, 1, 1, 0.5).unwrap(), vec![toy_frame(0.2)]).unwrap()
    }

    #[test]
    fn toy_system_is_certified_with_margin() {
        let c = certify_ti(&toy(), 0).unwrap();
        assert_eq!(c.verdict, Verdict::Certified);
        let s = c.spectral.as_ref().unwrap();
        assert!((s.rho - 0.8).abs() < 1e-9);
        assert!((s.margin - 0.2).abs() < 1e-9);
        let Some(Witness::Diagonal { p, lambda_max }) = &c.witness else {
            panic!("{:?}", c.witness)
        };
        assert!(p.iter().all(|&x| x > 0.0));
        assert!(*lambda_max < 0.0);
        assert!(c.verify_witness(&toy()).unwrap().unwrap() < 0.0);
    }

    #[test]
    fn zero_couplings_with_unit_budget_certify_with_margin_one() {
        let data = FrameData {
            beta: vec![0.0],
            delta: vec![2.0],
            adjacency: DenseMatrix::zeros(1, 1),
            beta_w: DenseMatrix::zeros(1, 1),
            c_w: DenseMatrix::filled(1, 1, 1e-300),
            alpha_w: DenseMatrix::zeros(1, 1),
            delta_w: vec![2.0],
            w_max: 1.0,
        };
        let f = VirusLayerParams::new(data, 1, 1).unwrap();
        let s = ParameterSchedule::constant(SystemShape::new(1, 1, 1, 0.5).unwrap(), vec![f]).unwrap();
        let c = certify_ti(&s, 0).unwrap();
        assert_eq!(c.verdict, Verdict::Certified);
        assert!((c.spectral.unwrap().margin - 1.0).abs() < 1e-12);
    }

    #[test]
    fn supercritical_virus_not_certified_and_dfe_fails() {
        // ρ = 1 − h + h·β for β = 2 exceeds one.
        let data = FrameData {
            beta: vec![2.0],
            delta: vec![1.0],
            adjacency: DenseMatrix::identity(1),
            beta_w: DenseMatrix::zeros(1, 1),
            c_w: DenseMatrix::filled(1, 1, 0.1),
            alpha_w: DenseMatrix::zeros(1, 1),
            delta_w: vec![1.0],
            w_max: 1.0,
        };
        let hot = VirusLayerParams::new(data, 1, 1).unwrap();
        let shape = SystemShape::new(1, 1, 2, 0.1).unwrap();
        let s = ParameterSchedule::constant(shape, vec![toy_frame(0.2), hot]).unwrap();
        let dfe = certify_dfe(&s).unwrap();
        assert!(!dfe.certified);
        assert_eq!(dfe.viruses[0].verdict, Verdict::Certified);
        assert_eq!(dfe.viruses[1].verdict, Verdict::NotCertified);
    }

    #[test]
    fn assumption_failure_makes_certificate_inapplicable() {
        let shape = SystemShape::new(1, 1, 1, 2.0).unwrap();
        let s = ParameterSchedule::constant(shape, vec![toy_frame(0.2)]).unwrap();
        let c = certify_ti(&s, 0).unwrap();
        assert_eq!(c.verdict, Verdict::Inapplicable);
        assert!(
            matches!(&c.reasons[0], Reason::AssumptionsFailed { failed } if failed.contains(&AssumptionId::StepBudget))
        );
    }

    #[test]
    fn reproduction_ordering_on_toy() {
        let s = toy();
        let cmp = reproduction_comparison(&s.viruses()[0].frames()[0], s.shape()).unwrap();
        assert!((cmp.rho_individual - 0.6).abs() < 1e-12);
        assert!((cmp.rho_full - 0.8).abs() < 1e-9);
        assert!(cmp.irreducible && cmp.ordering_holds);

        let mut data = toy_frame(0.2).to_data();
        data.beta_w = DenseMatrix::zeros(1, 1);
        let f = VirusLayerParams::new(data, 1, 1).unwrap();
        let cmp = reproduction_comparison(&f, s.shape()).unwrap();
        assert!(!cmp.irreducible);
        assert!(!cmp.assumptions.passed());
    }

    #[test]
    fn kappa_matches_hand_example() {
        let b = kappa_bound(0.5, 1.0, 2, 0.5).unwrap();
        assert!((b.mu - 0.25).abs() < 1e-15);
        assert!((b.p1 - 0.75).abs() < 1e-15);
        assert!((b.m1.unwrap() - 21.0).abs() < 1e-12);
        let exact = 0.4375f64.powi(2) / (2.0 * 21f64.powi(4)) * 0.5;
        assert!(((b.kappa_star - exact) / exact).abs() < 1e-12);
        assert!(kappa_bound(0.5, 1.0, 2, 1.0).is_err());
        assert!(kappa_bound(1.0, 1.0, 2, 0.5).is_err());
    }

    #[test]
    fn kappa_is_astronomically_small_at_fifteen_states() {
        let b = kappa_bound(0.9987, 1.0016, 15, 0.5).unwrap();
        assert!(b.log10_kappa_star() < -200.0);
        assert!(b.kappa_star < 1e-200);
        assert!(b.ln_kappa_star.is_finite());
    }

    #[test]
    fn constant_schedule_certifies_under_slow_variation() {
        let c = certify_tv_slow(&toy(), 0, 10, 0.5).unwrap();
        assert_eq!(c.verdict, Verdict::Certified);
        assert_eq!(c.slow.as_ref().unwrap().kappa_obs, 0.0);
        assert!(c.verify_witness(&toy()).unwrap().unwrap() < 0.0);
    }

    #[test]
    fn heterogeneous_healing_fails_structure() {
        let data = FrameData {
            beta: vec![0.1, 0.1],
            delta: vec![1.0, 2.0],
            adjacency: DenseMatrix::filled(2, 2, 1.0),
            beta_w: DenseMatrix::zeros(2, 1),
            c_w: DenseMatrix::filled(1, 2, 0.5),
            alpha_w: DenseMatrix::zeros(1, 1),
            delta_w: vec![1.0],
            w_max: 1.0,
        };
        let f = VirusLayerParams::new(data, 2, 1).unwrap();
        let s = ParameterSchedule::constant(SystemShape::new(2, 1, 1, 0.1).unwrap(), vec![f]).unwrap();
        let c = certify_tv_homogeneous(&s, 0).unwrap();
        assert_eq!(c.verdict, Verdict::Inapplicable);
        let Reason::Structure { failed } = &c.reasons[0] else {
            panic!()
        };
        assert!(failed.contains(&StructuralCondition::HomogeneousHealing));
        assert!(failed.contains(&StructuralCondition::ExposureMatchesShedding));
    }

    fn symmetric_frame(beta: f64) -> VirusLayerParams {
        VirusLayerParams::new(
            FrameData {
                beta: vec![beta, beta],
                delta: vec![1.0, 1.0],
                adjacency: DenseMatrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap(),
                beta_w: DenseMatrix::filled(2, 1, 0.2),
                c_w: DenseMatrix::filled(1, 2, 0.2),
                alpha_w: DenseMatrix::zeros(1, 1),
                delta_w: vec![1.0],
                w_max: 1.0,
            },
            2,
            1,
        )
        .unwrap()
    }

    #[test]
    fn homogeneous_constant_schedule_agrees_with_time_invariant() {
        let s =
            ParameterSchedule::constant(SystemShape::new(2, 1, 1, 0.1).unwrap(), vec![symmetric_frame(0.3)]).unwrap();
        let a = certify_tv_homogeneous(&s, 0).unwrap();
        let b = certify_ti(&s, 0).unwrap();
        assert_eq!(a.verdict, Verdict::Certified);
        assert_eq!(a.verdict, b.verdict);
        assert!(a.verify_witness(&s).unwrap().unwrap() < 0.0);
    }

    #[test]
    fn periodic_homogeneous_schedule_is_auto_selected() {
        let v = VirusSchedule::periodic(vec![symmetric_frame(0.3), symmetric_frame(0.1)]).unwrap();
        let s = ParameterSchedule::new(SystemShape::new(2, 1, 1, 0.1).unwrap(), vec![v]).unwrap();
        let attempts = certify_auto(&s, 0, 100, 0.5).unwrap();
        assert_eq!(attempts.len(), 1);
        assert_eq!(attempts[0].kind, CertificateKind::HomogeneousSymmetric);
        assert_eq!(attempts[0].verdict, Verdict::Certified);
    }

    #[test]
    fn envelope_rescues_bound_failure() {
        let mut a = toy_frame(0.2).to_data();
        a.delta = vec![1.5];
        let v = VirusSchedule::periodic(vec![VirusLayerParams::new(a, 1, 1).unwrap(), toy_frame(0.2)]).unwrap();
        let s = ParameterSchedule::new(SystemShape::new(1, 1, 1, 0.5).unwrap(), vec![v]).unwrap();
        let attempts = certify_auto(&s, 0, 100, 0.5).unwrap();
        let kinds: Vec<_> = attempts.iter().map(|c| c.kind).collect();
        assert_eq!(
            kinds,
            vec![
                CertificateKind::HomogeneousSymmetric,
                CertificateKind::SlowVariation,
                CertificateKind::CommonDiagonal
            ]
        );
        assert_eq!(attempts[1].verdict, Verdict::NotCertified);
        assert_eq!(attempts[2].verdict, Verdict::Certified);
        assert!(attempts[2].verify_witness(&s).unwrap().unwrap() < 0.0);
    }

    #[test]
    fn audit_passes_for_certified_toy_and_flags_corruption() {
        let s = toy();
        let c = certify_ti(&s, 0).unwrap();
        let z0 = LayeredState::new(vec![vec![0.5]], vec![vec![0.5]], s.shape()).unwrap();
        let t = rollout(&s, &z0, 40, true).unwrap();
        let audit = lyapunov_decrease_audit(&s, t.states().unwrap(), 0, &c);
        assert!(audit.passed, "{audit:?}");
        assert_eq!(audit.steps_checked, 40);

        let zero = rollout(&s, &LayeredState::zeros(s.shape()), 5, true).unwrap();
        let vacuous = lyapunov_decrease_audit(&s, zero.states().unwrap(), 0, &c);
        assert!(vacuous.passed && vacuous.steps_checked == 0);

        let mut bad = c.clone();
        if let Some(Witness::Diagonal { p, .. }) = &mut bad.witness {
            p[0] = -p[0];
        }
        let audit = lyapunov_decrease_audit(&s, t.states().unwrap(), 0, &bad);
        assert!(!audit.passed);
        assert!(bad.verify_witness(&s).unwrap().unwrap() >= 0.0);
    }
}
