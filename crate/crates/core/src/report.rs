//! Table and plot-ready datasets derived from study metrics, and their CSV
//! serialization.
//!
//! `tables.csv` holds group averages in the paper's layout (MSE x 10^4, bias
//! x 100). `entities.csv` holds one row per entity and sampling-state group
//! with its contribution count, so grouped tables can be rebuilt exactly from
//! entity files alone.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::simulator::CensusRun;
use crate::study::{StudyMetrics, SubareaGroup};

pub const MSE_SCALE: f64 = 1e4;
pub const BIAS_SCALE: f64 = 1e2;

/// One grouped table cell.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub scenario: String,
    pub case: String,
    pub group: String,
    pub indicator: String,
    pub estimator: String,
    pub avg_mse_x1e4: f64,
    pub avg_bias_x100: f64,
}

/// One per-entity dataset row (areas have no `j`; subareas carry their
/// sampling-state group and the number of contributing replicates).
#[derive(Debug, Clone, PartialEq)]
pub struct EntityRow {
    pub case: String,
    pub scenario: String,
    pub estimator: String,
    pub alpha: u8,
    /// 1-based area label.
    pub d: usize,
    /// 1-based subarea label within the area; `None` for area rows.
    pub j: Option<usize>,
    pub group: String,
    /// Number of (replicate, entity) contributions behind this row.
    pub n: usize,
    pub mse_x1e4: f64,
    pub bias_x100: f64,
}

pub const GROUP_AREA: &str = "area";
pub const GROUP_SUBAREA: &str = "subarea";
pub const GROUP_SAMPLED: &str = "sampled_subarea";
pub const GROUP_NONSAMPLED: &str = "nonsampled_subarea";

fn indicator_name(alpha: u8) -> &'static str {
    match alpha {
        0 => "inc",
        1 => "gap",
        _ => "sev",
    }
}

fn alpha_from_indicator(name: &str) -> Option<u8> {
    match name {
        "inc" => Some(0),
        "gap" => Some(1),
        "sev" => Some(2),
        _ => None,
    }
}

/// Group-average table in the paper's layout, one row per
/// (group, indicator, estimator).
pub fn emit_tables(metrics: &StudyMetrics) -> Vec<TableRow> {
    let split = !metrics.all_subareas_always_sampled();
    let mut rows = Vec::new();
    for &kind in &metrics.estimators {
        for &alpha in &metrics.alphas {
            rows.push(TableRow {
                scenario: metrics.scenario_name.clone(),
                case: metrics.case_label.clone(),
                group: GROUP_AREA.to_string(),
                indicator: indicator_name(alpha).to_string(),
                estimator: kind.name().to_string(),
                avg_mse_x1e4: metrics.area_group_mse(kind, alpha) * MSE_SCALE,
                avg_bias_x100: metrics.area_group_bias(kind, alpha) * BIAS_SCALE,
            });
            if split {
                for (group, label) in [
                    (SubareaGroup::Sampled, GROUP_SAMPLED),
                    (SubareaGroup::Nonsampled, GROUP_NONSAMPLED),
                ] {
                    rows.push(TableRow {
                        scenario: metrics.scenario_name.clone(),
                        case: metrics.case_label.clone(),
                        group: label.to_string(),
                        indicator: indicator_name(alpha).to_string(),
                        estimator: kind.name().to_string(),
                        avg_mse_x1e4: metrics.subarea_group_mse(kind, alpha, group) * MSE_SCALE,
                        avg_bias_x100: metrics.subarea_group_bias(kind, alpha, group) * BIAS_SCALE,
                    });
                }
            } else {
                rows.push(TableRow {
                    scenario: metrics.scenario_name.clone(),
                    case: metrics.case_label.clone(),
                    group: GROUP_SUBAREA.to_string(),
                    indicator: indicator_name(alpha).to_string(),
                    estimator: kind.name().to_string(),
                    avg_mse_x1e4: metrics.subarea_group_mse(kind, alpha, SubareaGroup::All)
                        * MSE_SCALE,
                    avg_bias_x100: metrics.subarea_group_bias(kind, alpha, SubareaGroup::All)
                        * BIAS_SCALE,
                });
            }
        }
    }
    rows
}

/// Per-entity dataset: one row per area, and one row per subarea and
/// sampling-state group with at least one contribution.
pub fn emit_boxplot_data(metrics: &StudyMetrics) -> Vec<EntityRow> {
    let layout = metrics.layout();
    let split = !metrics.all_subareas_always_sampled();
    let mut rows = Vec::new();
    for &kind in &metrics.estimators {
        for &alpha in &metrics.alphas {
            for d in 0..layout.areas() {
                let acc = metrics.area_accum(kind, alpha, d);
                rows.push(EntityRow {
                    case: metrics.case_label.clone(),
                    scenario: metrics.scenario_name.clone(),
                    estimator: kind.name().to_string(),
                    alpha,
                    d: d + 1,
                    j: None,
                    group: GROUP_AREA.to_string(),
                    n: acc.count,
                    mse_x1e4: acc.mse() * MSE_SCALE,
                    bias_x100: acc.bias() * BIAS_SCALE,
                });
            }
            for s in 0..layout.total_subareas() {
                let d = layout.area_of_subarea(s);
                let j = layout.local_subarea(s);
                let groups: &[(SubareaGroup, &str)] = if split {
                    &[
                        (SubareaGroup::Sampled, GROUP_SAMPLED),
                        (SubareaGroup::Nonsampled, GROUP_NONSAMPLED),
                    ]
                } else {
                    &[(SubareaGroup::All, GROUP_SUBAREA)]
                };
                for &(group, label) in groups {
                    let acc = metrics.subarea_accum(kind, alpha, s, group);
                    if acc.count == 0 {
                        continue;
                    }
                    rows.push(EntityRow {
                        case: metrics.case_label.clone(),
                        scenario: metrics.scenario_name.clone(),
                        estimator: kind.name().to_string(),
                        alpha,
                        d: d + 1,
                        j: Some(j + 1),
                        group: label.to_string(),
                        n: acc.count,
                        mse_x1e4: acc.mse() * MSE_SCALE,
                        bias_x100: acc.bias() * BIAS_SCALE,
                    });
                }
            }
        }
    }
    rows
}

pub fn write_tables_csv<W: Write>(rows: &[TableRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "scenario",
        "case",
        "group",
        "indicator",
        "estimator",
        "avg_mse_x1e4",
        "avg_bias_x100",
    ])?;
    for r in rows {
        w.write_record([
            r.scenario.as_str(),
            r.case.as_str(),
            r.group.as_str(),
            r.indicator.as_str(),
            r.estimator.as_str(),
            &r.avg_mse_x1e4.to_string(),
            &r.avg_bias_x100.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_entities_csv<W: Write>(rows: &[EntityRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "case",
        "scenario",
        "estimator",
        "alpha",
        "d",
        "j_or_blank",
        "group",
        "n",
        "mse_x1e4",
        "bias_x100",
    ])?;
    for r in rows {
        w.write_record([
            r.case.as_str(),
            r.scenario.as_str(),
            r.estimator.as_str(),
            &r.alpha.to_string(),
            &r.d.to_string(),
            &r.j.map(|j| j.to_string()).unwrap_or_default(),
            r.group.as_str(),
            &r.n.to_string(),
            &r.mse_x1e4.to_string(),
            &r.bias_x100.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Read an entities file written by [`write_entities_csv`].
pub fn read_entities_csv<R: Read>(reader: R) -> Result<Vec<EntityRow>> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    let expected = [
        "case",
        "scenario",
        "estimator",
        "alpha",
        "d",
        "j_or_blank",
        "group",
        "n",
        "mse_x1e4",
        "bias_x100",
    ];
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::CsvRow {
            row: 1,
            message: format!("unexpected entities header: {}", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, record) in r.records().enumerate() {
        let row_no = i + 2;
        let record = record?;
        let field = |idx: usize| record.get(idx).unwrap_or_default();
        let parse_f64 = |idx: usize, what: &str| {
            field(idx).parse::<f64>().map_err(|_| Error::CsvRow {
                row: row_no,
                message: format!("bad {what} '{}'", field(idx)),
            })
        };
        let parse_usize = |idx: usize, what: &str| {
            field(idx).parse::<usize>().map_err(|_| Error::CsvRow {
                row: row_no,
                message: format!("bad {what} '{}'", field(idx)),
            })
        };
        let alpha = alpha_from_indicator(indicator_name(
            field(3).parse::<u8>().map_err(|_| Error::CsvRow {
                row: row_no,
                message: format!("bad alpha '{}'", field(3)),
            })?,
        ))
        .expect("alpha normalized");
        let j = if field(5).is_empty() {
            None
        } else {
            Some(parse_usize(5, "j")?)
        };
        rows.push(EntityRow {
            case: field(0).to_string(),
            scenario: field(1).to_string(),
            estimator: field(2).to_string(),
            alpha,
            d: parse_usize(4, "d")?,
            j,
            group: field(6).to_string(),
            n: parse_usize(7, "n")?,
            mse_x1e4: parse_f64(8, "mse_x1e4")?,
            bias_x100: parse_f64(9, "bias_x100")?,
        });
    }
    Ok(rows)
}

/// Debug dump of the per-census simulated measures, one row per
/// (alpha, census, entity): columns kind, alpha, b, d, j-or-blank, value.
/// `alphas` must list the FGT orders the run was built with, in order.
pub fn write_census_run_csv<W: Write>(
    run: &CensusRun,
    alphas: &[u8],
    layout: &crate::population::PopulationLayout,
    writer: W,
) -> Result<()> {
    if alphas.len() != run.measure_count() {
        return Err(Error::InvalidInput(format!(
            "run has {} measures, {} FGT orders given",
            run.measure_count(),
            alphas.len()
        )));
    }
    if layout.areas() != run.areas() || layout.total_subareas() != run.subareas() {
        return Err(Error::InvalidInput(
            "layout does not match the census run".into(),
        ));
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["kind", "alpha", "b", "d", "j_or_blank", "value"])?;
    for (m, &alpha) in alphas.iter().enumerate() {
        for b in 0..run.censuses() {
            for d in 0..run.areas() {
                w.write_record([
                    run.kind.name(),
                    &alpha.to_string(),
                    &(b + 1).to_string(),
                    &(d + 1).to_string(),
                    "",
                    &run.area_measure(m, b, d).to_string(),
                ])?;
            }
            for s in 0..run.subareas() {
                w.write_record([
                    run.kind.name(),
                    &alpha.to_string(),
                    &(b + 1).to_string(),
                    &(layout.area_of_subarea(s) + 1).to_string(),
                    &(layout.local_subarea(s) + 1).to_string(),
                    &run.subarea_measure(m, b, s).to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Rebuild the grouped table from entity rows: contribution-weighted averages
/// per (scenario, case, group, indicator, estimator).
pub fn aggregate_entities(rows: &[EntityRow]) -> Vec<TableRow> {
    #[derive(Default)]
    struct Agg {
        mse_weighted: f64,
        bias_weighted: f64,
        n: usize,
        // area rows average unweighted over entities to match the per-area
        // group definition; counts are equal there anyway
        mse_plain: f64,
        bias_plain: f64,
        entities: usize,
    }
    let mut keys: Vec<(String, String, String, String, String)> = Vec::new();
    let mut aggs: Vec<Agg> = Vec::new();
    for r in rows {
        let key = (
            r.scenario.clone(),
            r.case.clone(),
            r.group.clone(),
            indicator_name(r.alpha).to_string(),
            r.estimator.clone(),
        );
        let idx = match keys.iter().position(|k| *k == key) {
            Some(i) => i,
            None => {
                keys.push(key);
                aggs.push(Agg::default());
                aggs.len() - 1
            }
        };
        let agg = &mut aggs[idx];
        agg.mse_weighted += r.mse_x1e4 * r.n as f64;
        agg.bias_weighted += r.bias_x100 * r.n as f64;
        agg.n += r.n;
        agg.mse_plain += r.mse_x1e4;
        agg.bias_plain += r.bias_x100;
        agg.entities += 1;
    }
    keys.into_iter()
        .zip(aggs)
        .map(|((scenario, case, group, indicator, estimator), agg)| {
            let (mse, bias) = if group == GROUP_AREA {
                (
                    agg.mse_plain / agg.entities as f64,
                    agg.bias_plain / agg.entities as f64,
                )
            } else {
                (
                    agg.mse_weighted / agg.n as f64,
                    agg.bias_weighted / agg.n as f64,
                )
            };
            TableRow {
                scenario,
                case,
                group,
                indicator,
                estimator,
                avg_mse_x1e4: mse,
                avg_bias_x100: bias,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::PopulationLayout;
    use crate::sampling::SamplingDesign;
    use crate::simulator::EstimatorKind;
    use crate::study::{run_study, PovertyLinePolicy, SamplePolicy, ScenarioSpec, StudyConfig};

    fn tiny_metrics(case2: bool) -> StudyMetrics {
        let (m, n, label) = if case2 { (2, 4, "case2") } else { (3, 3, "case1") };
        let config = StudyConfig {
            scenario: ScenarioSpec::e_skew(),
            layout: PopulationLayout::uniform(3, 3, 6).unwrap(),
            design: SamplingDesign::uniform(3, m, n),
            case_label: label.into(),
            replicates: 4,
            censuses: 4,
            estimators: vec![EstimatorKind::Mell1, EstimatorKind::Mell2],
            alphas: vec![0, 1],
            seed: 7,
            poverty_line_policy: PovertyLinePolicy::PerPopulation,
            poverty_line_fraction: 0.6,
            sample_policy: SamplePolicy::RedrawPerReplicate,
            workers: None,
        };
        run_study(&config).unwrap()
    }

    #[test]
    fn scaling_of_table_values() {
        // a raw MSE of 0.055744 renders as 557.44; raw bias -0.031 as -3.1
        assert!((0.055744 * MSE_SCALE - 557.44).abs() < 1e-9);
        assert!((-0.031 * BIAS_SCALE + 3.1).abs() < 1e-12);
    }

    #[test]
    fn case1_row_counts() {
        let metrics = tiny_metrics(false);
        let entities = emit_boxplot_data(&metrics);
        // per (estimator, alpha): 3 area rows + 9 subarea rows
        let subarea_rows = entities
            .iter()
            .filter(|r| r.group == GROUP_SUBAREA && r.estimator == "MELL1" && r.alpha == 0)
            .count();
        assert_eq!(subarea_rows, 9);
        let tables = emit_tables(&metrics);
        // area + subarea per (estimator, alpha)
        assert_eq!(tables.len(), 2 * 2 * 2);
        assert!(tables.iter().all(|r| r.group != GROUP_SAMPLED));
    }

    #[test]
    fn case2_rows_split_by_state() {
        let metrics = tiny_metrics(true);
        let entities = emit_boxplot_data(&metrics);
        assert!(entities.iter().any(|r| r.group == GROUP_SAMPLED));
        assert!(entities.iter().any(|r| r.group == GROUP_NONSAMPLED));
        // every subarea contribution is accounted for exactly once
        let n_total: usize = entities
            .iter()
            .filter(|r| r.estimator == "MELL2" && r.alpha == 0 && r.j.is_some())
            .map(|r| r.n)
            .sum();
        assert_eq!(n_total, metrics.replicates * metrics.layout().total_subareas());
    }

    #[test]
    fn aggregation_rebuilds_tables_exactly() {
        for case2 in [false, true] {
            let metrics = tiny_metrics(case2);
            let tables = emit_tables(&metrics);
            let entities = emit_boxplot_data(&metrics);
            let rebuilt = aggregate_entities(&entities);
            assert_eq!(tables.len(), rebuilt.len());
            for row in &tables {
                let twin = rebuilt
                    .iter()
                    .find(|r| {
                        r.group == row.group
                            && r.indicator == row.indicator
                            && r.estimator == row.estimator
                    })
                    .expect("rebuilt row");
                assert!(
                    (twin.avg_mse_x1e4 - row.avg_mse_x1e4).abs() < 1e-9,
                    "{}/{}/{}: {} vs {}",
                    row.group,
                    row.indicator,
                    row.estimator,
                    twin.avg_mse_x1e4,
                    row.avg_mse_x1e4
                );
                assert!((twin.avg_bias_x100 - row.avg_bias_x100).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn entities_csv_round_trip() {
        let metrics = tiny_metrics(true);
        let entities = emit_boxplot_data(&metrics);
        let mut buffer = Vec::new();
        write_entities_csv(&entities, &mut buffer).unwrap();
        let back = read_entities_csv(buffer.as_slice()).unwrap();
        assert_eq!(back.len(), entities.len());
        for (a, b) in entities.iter().zip(&back) {
            assert_eq!(a.group, b.group);
            assert_eq!(a.n, b.n);
            assert!((a.mse_x1e4 - b.mse_x1e4).abs() < 1e-12);
        }
    }

    #[test]
    fn entities_header_mismatch_is_rejected() {
        let bad = "case,scenario,estimator\nx,y,z\n";
        assert!(read_entities_csv(bad.as_bytes()).is_err());
    }

    #[test]
    fn census_run_csv_row_count() {
        use crate::fit::{decompose_residuals, fit_ols};
        use crate::population::{generate_covariates, generate_population, FgtParams, ModelParams};
        use crate::rng::RngStream;
        use crate::sampling::{draw_sample, extract_sample};
        use crate::simulator::simulate_censuses;
        use std::sync::Arc;

        let layout = PopulationLayout::uniform(2, 2, 5).unwrap();
        let census = Arc::new(generate_covariates(&layout, RngStream::new(1)));
        let params = ModelParams {
            beta: vec![3.0, 0.03, -0.04],
            area_effect: crate::dist::SkewNormalSpec::normal(0.5).unwrap(),
            subarea_effect: crate::dist::SkewNormalSpec::normal(0.25).unwrap(),
            unit_error: crate::dist::SkewNormalSpec::normal(0.5).unwrap(),
        };
        let population = generate_population(census.clone(), &params, RngStream::new(2)).unwrap();
        let index = draw_sample(&layout, &SamplingDesign::uniform(2, 2, 3), RngStream::new(3))
            .unwrap();
        let sample = extract_sample(&population, &index).unwrap();
        let fit = fit_ols(&sample).unwrap();
        let effects = decompose_residuals(&fit, &sample);
        let fgt = [FgtParams::new(10.0, 0, 0.0).unwrap()];
        let run = simulate_censuses(
            EstimatorKind::Mell1,
            &fit,
            &effects,
            &census,
            &index,
            &fgt,
            3,
            RngStream::new(4),
        )
        .unwrap();
        let mut buffer = Vec::new();
        write_census_run_csv(&run, &[0], &layout, &mut buffer).unwrap();
        let lines = buffer.iter().filter(|&&c| c == b'\n').count();
        // header + B x (areas + subareas)
        assert_eq!(lines, 1 + 3 * (2 + 4));
        assert!(write_census_run_csv(&run, &[0, 1], &layout, &mut Vec::new()).is_err());
    }
}
