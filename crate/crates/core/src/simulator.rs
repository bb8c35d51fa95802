//! Simulated-census estimators of FGT measures: ELL, the two modified
//! variants MELL1 and MELL2, and the one-fold ELL1 comparison estimator.
//!
//! For each census `b = 1..B` the unit values are built as
//!
//! * ELL:   `y* = x'beta*(b) + u*_d(b) + v*_dj(b) + e*_djk(b)`
//! * MELL1: `y* = x'beta_hat + u_hat_d + v*_dj(b) + e*_djk(b)`
//! * MELL2: sampled subareas `y* = x'beta_hat + u_hat_d + v_hat_dj + e*_djk(b)`,
//!   non-sampled subareas as MELL1
//! * ELL1:  `y* = x'beta*(b) + t*_dj(b) + e*_tk(b)` with subareas as clusters
//!
//! where `beta*(b) ~ N(beta_hat, Cov(beta_hat))` and the starred effects are
//! empirical draws: `u*` from the estimated area effects (one draw per area
//! per census), `v*` from the pooled estimated subarea effects (one draw per
//! subarea per census), `e*` from the pooled unit errors (one draw per unit
//! per census). Draw streams are keyed by `(census, area, subarea)` and shared
//! across estimator kinds, so MELL1 and MELL2 consume identical draws and
//! produce bit-identical values on every non-sampled subarea.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::dist::MvnSampler;
use crate::error::{Error, Result};
use crate::fit::{OlsFit, RandomEffectEstimates};
use crate::population::{fgt_welfare, CovariateCensus, FgtParams};
use crate::rng::RngStream;
use crate::sampling::SampleIndex;
use rand::Rng;

/// Stream labels used below the estimator stream; fixed so that coupled
/// estimator kinds replay identical draws.
pub mod stream_labels {
    /// (BETA, b): coefficient redraw of census `b`.
    pub const BETA: u64 = 0;
    /// (AREA, b, d): area-effect draw of census `b`, area `d`.
    pub const AREA: u64 = 1;
    /// (SUBAREA, b, d, j): subarea-level draw then unit draws, in order.
    pub const SUBAREA: u64 = 2;
}

/// The four simulated-census estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    Ell,
    Mell1,
    Mell2,
    /// ELL under the one-fold model that treats subareas as clusters.
    Ell1OneFold,
}

impl EstimatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Ell => "ELL",
            EstimatorKind::Mell1 => "MELL1",
            EstimatorKind::Mell2 => "MELL2",
            EstimatorKind::Ell1OneFold => "ELL1",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name.trim().to_ascii_uppercase().as_str() {
            "ELL" => Some(EstimatorKind::Ell),
            "MELL1" => Some(EstimatorKind::Mell1),
            "MELL2" => Some(EstimatorKind::Mell2),
            "ELL1" | "ELL1_ONEFOLD" => Some(EstimatorKind::Ell1OneFold),
            _ => None,
        }
    }

    /// Whether the coefficient vector is redrawn per census.
    fn redraws_beta(&self) -> bool {
        matches!(self, EstimatorKind::Ell | EstimatorKind::Ell1OneFold)
    }

    /// Whether the estimator needs the one-fold residual decomposition.
    pub fn is_one_fold(&self) -> bool {
        matches!(self, EstimatorKind::Ell1OneFold)
    }
}

/// Per-census simulated measures: `B` area vectors and subarea vectors per
/// FGT parameter set. Storage is census-major.
#[derive(Debug, Clone)]
pub struct CensusRun {
    pub kind: EstimatorKind,
    censuses: usize,
    measures: usize,
    areas: usize,
    subareas: usize,
    area_values: Vec<f64>,
    subarea_values: Vec<f64>,
}

impl CensusRun {
    pub fn censuses(&self) -> usize {
        self.censuses
    }

    pub fn measure_count(&self) -> usize {
        self.measures
    }

    pub fn areas(&self) -> usize {
        self.areas
    }

    pub fn subareas(&self) -> usize {
        self.subareas
    }

    /// `F*_{alpha d}(b)`
    pub fn area_measure(&self, measure: usize, b: usize, area: usize) -> f64 {
        self.area_values[(b * self.measures + measure) * self.areas + area]
    }

    /// `F*_{alpha dj}(b)`
    pub fn subarea_measure(&self, measure: usize, b: usize, subarea: usize) -> f64 {
        self.subarea_values[(b * self.measures + measure) * self.subareas + subarea]
    }
}

/// Point estimates (means over censuses) and naive MSEs (variance of the
/// census measures, divisor `B`) per measure and entity. Values are
/// measure-major: entry `measure * count + entity`.
#[derive(Debug, Clone)]
pub struct FgtEstimates {
    pub kind: EstimatorKind,
    pub measures: usize,
    pub area_estimate: Vec<f64>,
    pub area_naive_mse: Vec<f64>,
    pub subarea_estimate: Vec<f64>,
    pub subarea_naive_mse: Vec<f64>,
}

impl FgtEstimates {
    pub fn from_run(run: &CensusRun) -> Self {
        let (area_estimate, area_naive_mse) =
            means_and_naive_mse(run.censuses, run.measures, run.areas, &run.area_values);
        let (subarea_estimate, subarea_naive_mse) =
            means_and_naive_mse(run.censuses, run.measures, run.subareas, &run.subarea_values);
        Self {
            kind: run.kind,
            measures: run.measures,
            area_estimate,
            area_naive_mse,
            subarea_estimate,
            subarea_naive_mse,
        }
    }

    pub fn area(&self, measure: usize, area: usize) -> f64 {
        self.area_estimate[measure * (self.area_estimate.len() / self.measures) + area]
    }

    pub fn subarea(&self, measure: usize, subarea: usize) -> f64 {
        self.subarea_estimate[measure * (self.subarea_estimate.len() / self.measures) + subarea]
    }
}

/// Naive MSE estimates per measure and entity (Monte Carlo variance of the
/// simulated census measures around their mean, divisor `B`).
#[derive(Debug, Clone)]
pub struct NaiveMse {
    pub area: Vec<f64>,
    pub subarea: Vec<f64>,
}

/// Variance of the per-census measures with divisor `B`; `B = 1` gives zero.
pub fn naive_mse(run: &CensusRun) -> NaiveMse {
    let (_, area) = means_and_naive_mse(run.censuses, run.measures, run.areas, &run.area_values);
    let (_, subarea) =
        means_and_naive_mse(run.censuses, run.measures, run.subareas, &run.subarea_values);
    NaiveMse { area, subarea }
}

// Two-pass mean and population variance over the census axis.
fn means_and_naive_mse(
    censuses: usize,
    measures: usize,
    entities: usize,
    values: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; measures * entities];
    for b in 0..censuses {
        for m in 0..measures {
            let block = &values[(b * measures + m) * entities..(b * measures + m + 1) * entities];
            let out = &mut mean[m * entities..(m + 1) * entities];
            for (acc, v) in out.iter_mut().zip(block) {
                *acc += v;
            }
        }
    }
    let inv_b = 1.0 / censuses as f64;
    for v in &mut mean {
        *v *= inv_b;
    }
    let mut mse = vec![0.0; measures * entities];
    for b in 0..censuses {
        for m in 0..measures {
            let block = &values[(b * measures + m) * entities..(b * measures + m + 1) * entities];
            let mu = &mean[m * entities..(m + 1) * entities];
            let out = &mut mse[m * entities..(m + 1) * entities];
            for ((acc, v), c) in out.iter_mut().zip(block).zip(mu) {
                let dev = v - c;
                *acc += dev * dev;
            }
        }
    }
    for v in &mut mse {
        *v *= inv_b;
    }
    (mean, mse)
}

/// Measures of one fully specified simulated census: `y* = x'beta +
/// subarea_level[s] + unit_draws[k]`. Used to replay or enumerate draw
/// decisions outside the main estimator loop.
pub fn census_measures_from_components(
    census: &CovariateCensus,
    beta: &DVector<f64>,
    subarea_level: &[f64],
    unit_draws: &[f64],
    fgt: &[FgtParams],
) -> (Vec<f64>, Vec<f64>) {
    let layout = census.layout();
    let measures = fgt.len();
    let mut area_values = vec![0.0; measures * layout.areas()];
    let mut subarea_values = vec![0.0; measures * layout.total_subareas()];
    for area in 0..layout.areas() {
        let mut area_sums = vec![0.0; measures];
        for s in layout.subareas_of_area(area) {
            let mut sums = vec![0.0; measures];
            for unit in layout.units_of_subarea(s) {
                let xb: f64 = census
                    .row(unit)
                    .iter()
                    .zip(beta.iter())
                    .map(|(x, b)| x * b)
                    .sum();
                let expy = (xb + subarea_level[s] + unit_draws[unit]).exp();
                for (m, fp) in fgt.iter().enumerate() {
                    sums[m] += fgt_welfare(expy - fp.shift(), fp);
                }
            }
            for m in 0..measures {
                subarea_values[m * layout.total_subareas() + s] =
                    sums[m] / layout.unit_count(s) as f64;
                area_sums[m] += sums[m];
            }
        }
        for m in 0..measures {
            area_values[m * layout.areas() + area] =
                area_sums[m] / layout.units_in_area(area) as f64;
        }
    }
    (area_values, subarea_values)
}

/// Run one estimator: simulate `b_count` censuses and keep every per-census
/// measure.
pub fn simulate_censuses(
    kind: EstimatorKind,
    fit: &OlsFit,
    effects: &RandomEffectEstimates,
    census: &CovariateCensus,
    index: &SampleIndex,
    fgt: &[FgtParams],
    b_count: usize,
    stream: RngStream,
) -> Result<CensusRun> {
    if b_count == 0 {
        return Err(Error::InvalidInput("census count B must be >= 1".into()));
    }
    if fgt.is_empty() {
        return Err(Error::InvalidInput("no FGT parameter sets given".into()));
    }
    let layout = census.layout();
    if effects.e_hat.is_empty() || effects.v_hat.is_empty() {
        return Err(Error::InvalidInput("empty effect pools".into()));
    }
    if kind.is_one_fold() {
        if !effects.is_one_fold() {
            return Err(Error::InvalidInput(
                "ELL1 requires the one-fold residual decomposition".into(),
            ));
        }
    } else if effects.is_one_fold() {
        return Err(Error::InvalidInput(
            "two-fold estimators require the two-fold residual decomposition".into(),
        ));
    }

    // u_hat by census area; required by MELL1/MELL2
    let mut u_by_area = vec![f64::NAN; layout.areas()];
    for (&d, &u) in effects.area_labels.iter().zip(&effects.u_hat) {
        u_by_area[d] = u;
    }
    if matches!(kind, EstimatorKind::Mell1 | EstimatorKind::Mell2) {
        if let Some(d) = u_by_area.iter().position(|u| u.is_nan()) {
            return Err(Error::Unsupported(format!(
                "{} needs an estimated effect for every area; area {} has no sampled units",
                kind.name(),
                d + 1
            )));
        }
    }
    // v_hat by global subarea; required by MELL2 on sampled subareas
    let mut v_by_subarea = vec![f64::NAN; layout.total_subareas()];
    for (&s, &v) in effects.subarea_labels.iter().zip(&effects.v_hat) {
        v_by_subarea[s] = v;
    }
    if kind == EstimatorKind::Mell2 {
        for s in 0..layout.total_subareas() {
            if index.is_subarea_sampled(s) && v_by_subarea[s].is_nan() {
                return Err(Error::Unsupported(format!(
                    "MELL2: sampled subarea {s} has no estimated subarea effect"
                )));
            }
        }
    }

    let beta_sampler = if kind.redraws_beta() {
        Some(MvnSampler::new(fit.beta_hat.clone(), fit.cov_beta.clone())?)
    } else {
        None
    };

    // x'beta_hat for every census unit, reused across censuses
    let p = census.p();
    let beta_hat: Vec<f64> = fit.beta_hat.iter().copied().collect();
    if p != beta_hat.len() {
        return Err(Error::InvalidInput(format!(
            "fit has {} coefficients, census covariates have p = {p}",
            beta_hat.len()
        )));
    }
    let n_units = layout.total_units();
    let mut xb = vec![0.0; n_units];
    for (unit, out) in xb.iter_mut().enumerate() {
        *out = census
            .row(unit)
            .iter()
            .zip(&beta_hat)
            .map(|(x, b)| x * b)
            .sum();
    }

    let measures = fgt.len();
    let (d_total, s_total) = (layout.areas(), layout.total_subareas());
    let area_block = measures * d_total;
    let sub_block = measures * s_total;
    let mut area_values = vec![0.0; b_count * area_block];
    let mut subarea_values = vec![0.0; b_count * sub_block];

    let u_pool = &effects.u_hat;
    let v_pool = &effects.v_hat;
    let e_pool = &effects.e_hat;

    area_values
        .par_chunks_mut(area_block)
        .zip(subarea_values.par_chunks_mut(sub_block))
        .enumerate()
        .for_each(|(b, (area_out, sub_out))| {
            let b_label = b as u64;
            // coefficient delta for kinds that redraw beta
            let beta_delta: Option<Vec<f64>> = beta_sampler.as_ref().map(|sampler| {
                let draw = sampler.draw(stream.descend(&[stream_labels::BETA, b_label]));
                draw.iter().zip(&beta_hat).map(|(d, b)| d - b).collect()
            });
            let mut sums = vec![0.0; measures];
            let mut area_sums = vec![0.0; measures];
            for area in 0..d_total {
                let u_level = match kind {
                    EstimatorKind::Ell => {
                        let mut rng = stream
                            .descend(&[stream_labels::AREA, b_label, area as u64])
                            .rng();
                        u_pool[rng.random_range(0..u_pool.len())]
                    }
                    EstimatorKind::Mell1 | EstimatorKind::Mell2 => u_by_area[area],
                    EstimatorKind::Ell1OneFold => 0.0,
                };
                area_sums.fill(0.0);
                for s in layout.subareas_of_area(area) {
                    let j = layout.local_subarea(s) as u64;
                    let mut rng = stream
                        .descend(&[stream_labels::SUBAREA, b_label, area as u64, j])
                        .rng();
                    // the subarea-level draw comes first so that unit draws
                    // line up across estimator kinds
                    let pick = v_pool[rng.random_range(0..v_pool.len())];
                    let level = match kind {
                        EstimatorKind::Ell | EstimatorKind::Mell1 => u_level + pick,
                        EstimatorKind::Mell2 => {
                            if index.is_subarea_sampled(s) {
                                u_level + v_by_subarea[s]
                            } else {
                                u_level + pick
                            }
                        }
                        EstimatorKind::Ell1OneFold => pick,
                    };
                    sums.fill(0.0);
                    for unit in layout.units_of_subarea(s) {
                        let e = e_pool[rng.random_range(0..e_pool.len())];
                        let mut ystar = xb[unit] + level + e;
                        if let Some(delta) = &beta_delta {
                            ystar += census
                                .row(unit)
                                .iter()
                                .zip(delta)
                                .map(|(x, d)| x * d)
                                .sum::<f64>();
                        }
                        let expy = ystar.exp();
                        for (m, fp) in fgt.iter().enumerate() {
                            sums[m] += fgt_welfare(expy - fp.shift(), fp);
                        }
                    }
                    let inv_n = 1.0 / layout.unit_count(s) as f64;
                    for m in 0..measures {
                        sub_out[m * s_total + s] = sums[m] * inv_n;
                        area_sums[m] += sums[m];
                    }
                }
                let inv_nd = 1.0 / layout.units_in_area(area) as f64;
                for m in 0..measures {
                    area_out[m * d_total + area] = area_sums[m] * inv_nd;
                }
            }
        });

    Ok(CensusRun {
        kind,
        censuses: b_count,
        measures,
        areas: d_total,
        subareas: s_total,
        area_values,
        subarea_values,
    })
}

/// Run one estimator and reduce to point estimates and naive MSEs.
pub fn run_estimator(
    kind: EstimatorKind,
    fit: &OlsFit,
    effects: &RandomEffectEstimates,
    census: &CovariateCensus,
    index: &SampleIndex,
    fgt: &[FgtParams],
    b_count: usize,
    stream: RngStream,
) -> Result<FgtEstimates> {
    let run = simulate_censuses(kind, fit, effects, census, index, fgt, b_count, stream)?;
    Ok(FgtEstimates::from_run(&run))
}
