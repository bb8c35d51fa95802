//! Monte Carlo study harness: generates populations under a scenario, applies
//! the sampling case, runs the requested estimators, and accumulates empirical
//! bias and MSE per area and subarea.
//!
//! Replicates are independent jobs; each consumes streams derived from
//! `(seed, replicate)`, and partial results are merged in replicate order, so
//! the output is bit-identical for any worker count.

use std::sync::Arc;

use rayon::prelude::*;

use crate::dist::SkewNormalSpec;
use crate::error::{Error, Result};
use crate::fit::{decompose_residuals, fit_ols, fit_onefold};
use crate::population::{
    fgt_population, generate_covariates, generate_population, poverty_line, FgtParams,
    ModelParams, PopulationLayout,
};
use crate::rng::RngStream;
use crate::sampling::{draw_sample, extract_sample, SampleIndex, SamplingDesign};
use crate::simulator::{run_estimator, EstimatorKind};

// study-level stream labels
const L_COVARIATES: u64 = 0;
const L_Z_REFERENCE: u64 = 1;
const L_FIXED_SAMPLE: u64 = 2;
const L_REPLICATE: u64 = 3;
// per-replicate labels
const L_POPULATION: u64 = 0;
const L_SAMPLE: u64 = 1;
const L_ESTIMATORS: u64 = 2;

/// How the poverty line is fixed across replicates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PovertyLinePolicy {
    /// Compute `z` once from a dedicated reference population generated with a
    /// reserved stream, reuse across all replicates.
    FixedReference,
    /// Recompute `z` from each replicate's population.
    PerPopulation,
}

impl PovertyLinePolicy {
    pub fn name(&self) -> &'static str {
        match self {
            PovertyLinePolicy::FixedReference => "fixed_reference",
            PovertyLinePolicy::PerPopulation => "per_population",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "fixed_reference" => Some(PovertyLinePolicy::FixedReference),
            "per_population" => Some(PovertyLinePolicy::PerPopulation),
            _ => None,
        }
    }
}

/// Whether the sample is redrawn each replicate or drawn once and reused.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplePolicy {
    RedrawPerReplicate,
    FixedAcrossReplicates,
}

impl SamplePolicy {
    pub fn name(&self) -> &'static str {
        match self {
            SamplePolicy::RedrawPerReplicate => "redraw",
            SamplePolicy::FixedAcrossReplicates => "fixed",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "redraw" | "per_replicate" => Some(SamplePolicy::RedrawPerReplicate),
            "fixed" => Some(SamplePolicy::FixedAcrossReplicates),
            _ => None,
        }
    }
}

/// Generating scenario: regression coefficients and the three calibrated
/// error distributions.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub name: String,
    pub beta: Vec<f64>,
    pub area_effect: SkewNormalSpec,
    pub subarea_effect: SkewNormalSpec,
    pub unit_error: SkewNormalSpec,
}

impl ScenarioSpec {
    fn study(name: &str, lambda_v: f64, lambda_e: f64) -> Self {
        Self {
            name: name.to_string(),
            beta: vec![3.0, 0.03, -0.04],
            area_effect: SkewNormalSpec::normal(0.5).expect("static"),
            subarea_effect: SkewNormalSpec::new(lambda_v, 0.25).expect("static"),
            unit_error: SkewNormalSpec::new(lambda_e, 0.5).expect("static"),
        }
    }

    /// All three error components normal.
    pub fn all_normal() -> Self {
        Self::study("all_normal", 0.0, 0.0)
    }

    /// Skew-normal unit errors (shape 3), normal area and subarea effects.
    pub fn e_skew() -> Self {
        Self::study("e_skew", 0.0, 3.0)
    }

    /// Skew-normal subarea effects (shape 1) and unit errors (shape 3).
    pub fn ve_skew() -> Self {
        Self::study("ve_skew", 1.0, 3.0)
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "all_normal" => Some(Self::all_normal()),
            "e_skew" => Some(Self::e_skew()),
            "ve_skew" => Some(Self::ve_skew()),
            _ => None,
        }
    }

    pub fn params(&self) -> ModelParams {
        ModelParams {
            beta: self.beta.clone(),
            area_effect: self.area_effect,
            subarea_effect: self.subarea_effect,
            unit_error: self.unit_error,
        }
    }
}

/// Full configuration of one study cell.
#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub scenario: ScenarioSpec,
    pub layout: PopulationLayout,
    pub design: SamplingDesign,
    /// Label echoed into outputs ("case1", "case2", ...).
    pub case_label: String,
    /// Number of Monte Carlo replicates (populations).
    pub replicates: usize,
    /// Number of simulated censuses per estimator run.
    pub censuses: usize,
    pub estimators: Vec<EstimatorKind>,
    pub alphas: Vec<u8>,
    pub seed: u64,
    pub poverty_line_policy: PovertyLinePolicy,
    pub poverty_line_fraction: f64,
    pub sample_policy: SamplePolicy,
    /// Thread count; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl StudyConfig {
    /// Paper-shaped cell: 40 areas x 10 subareas x 50 units, case 1 or 2
    /// design, per-population poverty line at fraction 0.6.
    pub fn paper_cell(scenario: ScenarioSpec, case2: bool, replicates: usize, censuses: usize, seed: u64) -> Self {
        let layout = PopulationLayout::paper_study();
        let (design, case_label) = if case2 {
            (SamplingDesign::uniform(40, 5, 20), "case2".to_string())
        } else {
            (SamplingDesign::uniform(40, 10, 10), "case1".to_string())
        };
        Self {
            scenario,
            layout,
            design,
            case_label,
            replicates,
            censuses,
            estimators: vec![EstimatorKind::Ell, EstimatorKind::Mell1, EstimatorKind::Mell2],
            alphas: vec![0, 1],
            seed,
            poverty_line_policy: PovertyLinePolicy::PerPopulation,
            poverty_line_fraction: 0.6,
            sample_policy: SamplePolicy::RedrawPerReplicate,
            workers: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidInput("replicate count I must be >= 1".into()));
        }
        if self.censuses == 0 {
            return Err(Error::InvalidInput("census count B must be >= 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidInput("no estimators requested".into()));
        }
        let mut seen = Vec::new();
        for kind in &self.estimators {
            if seen.contains(kind) {
                return Err(Error::InvalidInput(format!(
                    "estimator {} listed twice",
                    kind.name()
                )));
            }
            seen.push(*kind);
        }
        if self.alphas.is_empty() {
            return Err(Error::InvalidInput("no FGT orders requested".into()));
        }
        if self.alphas.iter().any(|&a| a > 2) {
            return Err(Error::InvalidParameter("FGT orders must be 0, 1 or 2".into()));
        }
        if !(self.poverty_line_fraction > 0.0) {
            return Err(Error::InvalidParameter(
                "poverty line fraction must be positive".into(),
            ));
        }
        self.design.validate(&self.layout)
    }
}

/// Running error sums for one entity.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EntityAccum {
    pub sum_err: f64,
    pub sum_sq: f64,
    pub count: usize,
}

impl EntityAccum {
    fn add(&mut self, err: f64) {
        self.sum_err += err;
        self.sum_sq += err * err;
        self.count += 1;
    }

    /// Empirical bias `mean(estimate - truth)`; NaN with no contributions.
    pub fn bias(&self) -> f64 {
        self.sum_err / self.count as f64
    }

    /// Empirical MSE `mean((estimate - truth)^2)`; NaN with no contributions.
    pub fn mse(&self) -> f64 {
        self.sum_sq / self.count as f64
    }
}

/// Subarea pools used for group averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubareaGroup {
    /// Every contribution regardless of sampling state.
    All,
    /// Contributions from replicates in which the subarea was sampled.
    Sampled,
    /// Contributions from replicates in which it was not.
    Nonsampled,
}

/// Accumulated study output: per-entity bias and MSE for every requested
/// estimator and FGT order, with per-replicate sampled/non-sampled routing of
/// subarea contributions.
#[derive(Debug, Clone)]
pub struct StudyMetrics {
    pub scenario_name: String,
    pub case_label: String,
    pub seed: u64,
    pub replicates: usize,
    pub censuses: usize,
    pub estimators: Vec<EstimatorKind>,
    pub alphas: Vec<u8>,
    layout: PopulationLayout,
    area: Vec<EntityAccum>,
    subarea_all: Vec<EntityAccum>,
    subarea_sampled: Vec<EntityAccum>,
    subarea_nonsampled: Vec<EntityAccum>,
    /// For each subarea, the number of replicates in which it was sampled.
    sampled_replicates: Vec<usize>,
    /// Reference poverty line when the fixed-reference policy was used.
    pub reference_poverty_line: Option<f64>,
}

impl StudyMetrics {
    pub fn layout(&self) -> &PopulationLayout {
        &self.layout
    }

    fn kind_pos(&self, kind: EstimatorKind) -> usize {
        self.estimators
            .iter()
            .position(|k| *k == kind)
            .unwrap_or_else(|| panic!("estimator {} not in this study", kind.name()))
    }

    fn alpha_pos(&self, alpha: u8) -> usize {
        self.alphas
            .iter()
            .position(|a| *a == alpha)
            .unwrap_or_else(|| panic!("FGT order {alpha} not in this study"))
    }

    fn area_index(&self, kind: usize, measure: usize, area: usize) -> usize {
        (kind * self.alphas.len() + measure) * self.layout.areas() + area
    }

    fn subarea_index(&self, kind: usize, measure: usize, subarea: usize) -> usize {
        (kind * self.alphas.len() + measure) * self.layout.total_subareas() + subarea
    }

    pub fn area_accum(&self, kind: EstimatorKind, alpha: u8, area: usize) -> &EntityAccum {
        &self.area[self.area_index(self.kind_pos(kind), self.alpha_pos(alpha), area)]
    }

    pub fn subarea_accum(
        &self,
        kind: EstimatorKind,
        alpha: u8,
        subarea: usize,
        group: SubareaGroup,
    ) -> &EntityAccum {
        let idx = self.subarea_index(self.kind_pos(kind), self.alpha_pos(alpha), subarea);
        match group {
            SubareaGroup::All => &self.subarea_all[idx],
            SubareaGroup::Sampled => &self.subarea_sampled[idx],
            SubareaGroup::Nonsampled => &self.subarea_nonsampled[idx],
        }
    }

    /// Number of replicates in which the subarea was sampled.
    pub fn sampled_replicates(&self, subarea: usize) -> usize {
        self.sampled_replicates[subarea]
    }

    /// Whether every subarea was sampled in every replicate (case 1 designs).
    pub fn all_subareas_always_sampled(&self) -> bool {
        self.sampled_replicates.iter().all(|&c| c == self.replicates)
    }

    /// Mean over areas of the per-area MSEs.
    pub fn area_group_mse(&self, kind: EstimatorKind, alpha: u8) -> f64 {
        let (k, m) = (self.kind_pos(kind), self.alpha_pos(alpha));
        let d_total = self.layout.areas();
        (0..d_total)
            .map(|d| self.area[self.area_index(k, m, d)].mse())
            .sum::<f64>()
            / d_total as f64
    }

    /// Mean over areas of the per-area biases.
    pub fn area_group_bias(&self, kind: EstimatorKind, alpha: u8) -> f64 {
        let (k, m) = (self.kind_pos(kind), self.alpha_pos(alpha));
        let d_total = self.layout.areas();
        (0..d_total)
            .map(|d| self.area[self.area_index(k, m, d)].bias())
            .sum::<f64>()
            / d_total as f64
    }

    /// Pooled group-average MSE over all subarea contributions in the group.
    pub fn subarea_group_mse(&self, kind: EstimatorKind, alpha: u8, group: SubareaGroup) -> f64 {
        let (sum, count) = self.subarea_group_sums(kind, alpha, group, |a| a.sum_sq);
        sum / count as f64
    }

    /// Pooled group-average bias over all subarea contributions in the group.
    pub fn subarea_group_bias(&self, kind: EstimatorKind, alpha: u8, group: SubareaGroup) -> f64 {
        let (sum, count) = self.subarea_group_sums(kind, alpha, group, |a| a.sum_err);
        sum / count as f64
    }

    fn subarea_group_sums(
        &self,
        kind: EstimatorKind,
        alpha: u8,
        group: SubareaGroup,
        field: impl Fn(&EntityAccum) -> f64,
    ) -> (f64, usize) {
        let (k, m) = (self.kind_pos(kind), self.alpha_pos(alpha));
        let source = match group {
            SubareaGroup::All => &self.subarea_all,
            SubareaGroup::Sampled => &self.subarea_sampled,
            SubareaGroup::Nonsampled => &self.subarea_nonsampled,
        };
        let mut sum = 0.0;
        let mut count = 0;
        for s in 0..self.layout.total_subareas() {
            let acc = &source[self.subarea_index(k, m, s)];
            sum += field(acc);
            count += acc.count;
        }
        (sum, count)
    }
}

// Per-replicate errors, estimator-major then measure-major.
struct ReplicateOutcome {
    area_err: Vec<f64>,
    subarea_err: Vec<f64>,
    subarea_sampled: Vec<bool>,
}

/// Run the full study.
pub fn run_study(config: &StudyConfig) -> Result<StudyMetrics> {
    config.validate()?;
    match config.workers {
        None => run_study_inner(config),
        Some(workers) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers.max(1))
                .build()
                .map_err(|e| Error::InvalidInput(format!("worker pool: {e}")))?;
            pool.install(|| run_study_inner(config))
        }
    }
}

fn run_study_inner(config: &StudyConfig) -> Result<StudyMetrics> {
    let master = RngStream::new(config.seed);
    let params = config.scenario.params();
    let census = Arc::new(generate_covariates(
        &config.layout,
        master.child(L_COVARIATES),
    ));

    let reference_poverty_line = match config.poverty_line_policy {
        PovertyLinePolicy::FixedReference => {
            let reference = generate_population(
                census.clone(),
                &params,
                master.child(L_Z_REFERENCE),
            )?;
            Some(poverty_line(&reference, config.poverty_line_fraction))
        }
        PovertyLinePolicy::PerPopulation => None,
    };

    let fixed_sample = match config.sample_policy {
        SamplePolicy::FixedAcrossReplicates => Some(draw_sample(
            &config.layout,
            &config.design,
            master.child(L_FIXED_SAMPLE),
        )?),
        SamplePolicy::RedrawPerReplicate => None,
    };

    let outcomes: Result<Vec<ReplicateOutcome>> = (0..config.replicates)
        .into_par_iter()
        .map(|i| {
            run_replicate(
                config,
                &params,
                &census,
                reference_poverty_line,
                fixed_sample.as_ref(),
                master.descend(&[L_REPLICATE, i as u64]),
            )
            .map_err(|e| e.in_replicate(i))
        })
        .collect();

    Ok(merge_outcomes(config, reference_poverty_line, outcomes?))
}

fn run_replicate(
    config: &StudyConfig,
    params: &ModelParams,
    census: &Arc<crate::population::CovariateCensus>,
    reference_poverty_line: Option<f64>,
    fixed_sample: Option<&SampleIndex>,
    stream: RngStream,
) -> Result<ReplicateOutcome> {
    let layout = &config.layout;
    let population = generate_population(census.clone(), params, stream.child(L_POPULATION))?;
    let z = reference_poverty_line
        .unwrap_or_else(|| poverty_line(&population, config.poverty_line_fraction));
    let fgt: Vec<FgtParams> = config
        .alphas
        .iter()
        .map(|&alpha| FgtParams::new(z, alpha, 0.0))
        .collect::<Result<_>>()?;
    let truth = fgt_population(&population, &fgt);

    let index = match fixed_sample {
        Some(ix) => ix.clone(),
        None => draw_sample(layout, &config.design, stream.child(L_SAMPLE))?,
    };
    let sample = extract_sample(&population, &index)?;
    let fit = fit_ols(&sample)?;
    let effects = decompose_residuals(&fit, &sample);
    let needs_onefold = config.estimators.iter().any(EstimatorKind::is_one_fold);
    let onefold = if needs_onefold {
        Some(fit_onefold(&sample)?)
    } else {
        None
    };

    let (d_total, s_total) = (layout.areas(), layout.total_subareas());
    let measures = config.alphas.len();
    let mut area_err = vec![0.0; config.estimators.len() * measures * d_total];
    let mut subarea_err = vec![0.0; config.estimators.len() * measures * s_total];

    // shared estimator stream: coupled kinds replay identical draws
    let estimator_stream = stream.child(L_ESTIMATORS);
    for (k, &kind) in config.estimators.iter().enumerate() {
        let (active_fit, active_effects) = if kind.is_one_fold() {
            let (f, e) = onefold.as_ref().expect("one-fold fit prepared above");
            (f, e)
        } else {
            (&fit, &effects)
        };
        let estimate = run_estimator(
            kind,
            active_fit,
            active_effects,
            census,
            &index,
            &fgt,
            config.censuses,
            estimator_stream,
        )?;
        for m in 0..measures {
            for d in 0..d_total {
                area_err[(k * measures + m) * d_total + d] =
                    estimate.area(m, d) - truth.per_area[m * d_total + d];
            }
            for s in 0..s_total {
                subarea_err[(k * measures + m) * s_total + s] =
                    estimate.subarea(m, s) - truth.per_subarea[m * s_total + s];
            }
        }
    }

    Ok(ReplicateOutcome {
        area_err,
        subarea_err,
        subarea_sampled: (0..s_total).map(|s| index.is_subarea_sampled(s)).collect(),
    })
}

// Merge per-replicate errors in replicate order (the outcomes vector is
// ordered by construction), routing subarea contributions by sampling state.
fn merge_outcomes(
    config: &StudyConfig,
    reference_poverty_line: Option<f64>,
    outcomes: Vec<ReplicateOutcome>,
) -> StudyMetrics {
    let layout = config.layout.clone();
    let (d_total, s_total) = (layout.areas(), layout.total_subareas());
    let measures = config.alphas.len();
    let kinds = config.estimators.len();

    let mut metrics = StudyMetrics {
        scenario_name: config.scenario.name.clone(),
        case_label: config.case_label.clone(),
        seed: config.seed,
        replicates: config.replicates,
        censuses: config.censuses,
        estimators: config.estimators.clone(),
        alphas: config.alphas.clone(),
        layout,
        area: vec![EntityAccum::default(); kinds * measures * d_total],
        subarea_all: vec![EntityAccum::default(); kinds * measures * s_total],
        subarea_sampled: vec![EntityAccum::default(); kinds * measures * s_total],
        subarea_nonsampled: vec![EntityAccum::default(); kinds * measures * s_total],
        sampled_replicates: vec![0; s_total],
        reference_poverty_line,
    };

    for outcome in &outcomes {
        for (s, &sampled) in outcome.subarea_sampled.iter().enumerate() {
            if sampled {
                metrics.sampled_replicates[s] += 1;
            }
        }
        for idx in 0..metrics.area.len() {
            metrics.area[idx].add(outcome.area_err[idx]);
        }
        for idx in 0..metrics.subarea_all.len() {
            let err = outcome.subarea_err[idx];
            metrics.subarea_all[idx].add(err);
            if outcome.subarea_sampled[idx % s_total] {
                metrics.subarea_sampled[idx].add(err);
            } else {
                metrics.subarea_nonsampled[idx].add(err);
            }
        }
    }
    metrics
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(estimators: Vec<EstimatorKind>) -> StudyConfig {
        StudyConfig {
            scenario: ScenarioSpec::e_skew(),
            layout: PopulationLayout::uniform(4, 3, 8).unwrap(),
            design: SamplingDesign::uniform(4, 2, 4),
            case_label: "tiny".into(),
            replicates: 3,
            censuses: 5,
            estimators,
            alphas: vec![0, 1],
            seed: 2024,
            poverty_line_policy: PovertyLinePolicy::PerPopulation,
            poverty_line_fraction: 0.6,
            sample_policy: SamplePolicy::RedrawPerReplicate,
            workers: None,
        }
    }

    #[test]
    fn merge_mock_estimates_equal_truth() {
        // estimator equal to the truth in every replicate: bias = mse = 0
        let config = tiny_config(vec![EstimatorKind::Mell1]);
        let s_total = config.layout.total_subareas();
        let d_total = config.layout.areas();
        let outcomes = vec![ReplicateOutcome {
            area_err: vec![0.0; 2 * d_total],
            subarea_err: vec![0.0; 2 * s_total],
            subarea_sampled: vec![true; s_total],
        }];
        let mut one = config.clone();
        one.replicates = 1;
        let metrics = merge_outcomes(&one, None, outcomes);
        for d in 0..d_total {
            let acc = metrics.area_accum(EstimatorKind::Mell1, 0, d);
            assert_eq!(acc.bias(), 0.0);
            assert_eq!(acc.mse(), 0.0);
        }
    }

    #[test]
    fn merge_hand_case_bias_zero_mse_positive() {
        // estimates {0.3, 0.5} against truth 0.4: bias 0, MSE 0.01
        let config = tiny_config(vec![EstimatorKind::Mell1]);
        let d_total = config.layout.areas();
        let s_total = config.layout.total_subareas();
        let mut area_err_a = vec![0.0; 2 * d_total];
        let mut area_err_b = vec![0.0; 2 * d_total];
        area_err_a[0] = -0.1;
        area_err_b[0] = 0.1;
        let outcomes = vec![
            ReplicateOutcome {
                area_err: area_err_a,
                subarea_err: vec![0.0; 2 * s_total],
                subarea_sampled: vec![true; s_total],
            },
            ReplicateOutcome {
                area_err: area_err_b,
                subarea_err: vec![0.0; 2 * s_total],
                subarea_sampled: vec![true; s_total],
            },
        ];
        let mut two = config.clone();
        two.replicates = 2;
        let metrics = merge_outcomes(&two, None, outcomes);
        let acc = metrics.area_accum(EstimatorKind::Mell1, 0, 0);
        assert!(acc.bias().abs() < 1e-15);
        assert!((acc.mse() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn merge_routes_sampled_and_nonsampled_pools() {
        // sampled-state error 0, non-sampled error 1: group averages (0, 1)
        let config = tiny_config(vec![EstimatorKind::Mell1]);
        let s_total = config.layout.total_subareas();
        let d_total = config.layout.areas();
        let mut sampled = vec![false; s_total];
        sampled[0] = true;
        let subarea_err: Vec<f64> = (0..2 * s_total)
            .map(|idx| if sampled[idx % s_total] { 0.0 } else { 1.0 })
            .collect();
        let outcomes = vec![ReplicateOutcome {
            area_err: vec![0.0; 2 * d_total],
            subarea_err,
            subarea_sampled: sampled,
        }];
        let mut one = config.clone();
        one.replicates = 1;
        let metrics = merge_outcomes(&one, None, outcomes);
        let s = metrics.subarea_group_mse(EstimatorKind::Mell1, 0, SubareaGroup::Sampled);
        let n = metrics.subarea_group_mse(EstimatorKind::Mell1, 0, SubareaGroup::Nonsampled);
        assert_eq!(s, 0.0);
        assert_eq!(n, 1.0);
        assert!(!metrics.all_subareas_always_sampled());
    }

    #[test]
    fn tiny_study_runs_and_is_deterministic() {
        let config = tiny_config(vec![
            EstimatorKind::Ell,
            EstimatorKind::Mell1,
            EstimatorKind::Mell2,
            EstimatorKind::Ell1OneFold,
        ]);
        let a = run_study(&config).unwrap();
        let b = run_study(&config).unwrap();
        for d in 0..config.layout.areas() {
            for kind in &config.estimators {
                let (x, y) = (a.area_accum(*kind, 0, d), b.area_accum(*kind, 0, d));
                assert_eq!(x.sum_err.to_bits(), y.sum_err.to_bits());
                assert_eq!(x.sum_sq.to_bits(), y.sum_sq.to_bits());
            }
        }
        // sampled and nonsampled pools partition all contributions
        for s in 0..config.layout.total_subareas() {
            let all = a.subarea_accum(EstimatorKind::Ell, 0, s, SubareaGroup::All);
            let sam = a.subarea_accum(EstimatorKind::Ell, 0, s, SubareaGroup::Sampled);
            let non = a.subarea_accum(EstimatorKind::Ell, 0, s, SubareaGroup::Nonsampled);
            assert_eq!(sam.count + non.count, all.count);
            assert_eq!(all.count, config.replicates);
        }
    }

    #[test]
    fn area_group_average_is_mean_of_per_area_mses() {
        let config = tiny_config(vec![EstimatorKind::Mell2]);
        let metrics = run_study(&config).unwrap();
        let manual: f64 = (0..config.layout.areas())
            .map(|d| metrics.area_accum(EstimatorKind::Mell2, 1, d).mse())
            .sum::<f64>()
            / config.layout.areas() as f64;
        let group = metrics.area_group_mse(EstimatorKind::Mell2, 1);
        assert!((group - manual).abs() < 1e-12);
    }

    #[test]
    fn fixed_sample_policy_reuses_membership() {
        let mut config = tiny_config(vec![EstimatorKind::Mell2]);
        config.sample_policy = SamplePolicy::FixedAcrossReplicates;
        let metrics = run_study(&config).unwrap();
        for s in 0..config.layout.total_subareas() {
            let c = metrics.sampled_replicates(s);
            assert!(c == 0 || c == config.replicates, "subarea {s} count {c}");
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut config = tiny_config(vec![EstimatorKind::Mell1]);
        config.replicates = 0;
        assert!(run_study(&config).is_err());
        let mut config = tiny_config(vec![]);
        config.replicates = 1;
        assert!(run_study(&config).is_err());
        let mut config = tiny_config(vec![EstimatorKind::Mell1, EstimatorKind::Mell1]);
        config.replicates = 1;
        assert!(run_study(&config).is_err());
        let mut config = tiny_config(vec![EstimatorKind::Mell1]);
        config.alphas = vec![5];
        assert!(run_study(&config).is_err());
    }
}
