//! Finite population of areas, subareas and units: layout bookkeeping,
//! synthetic population generation under the two-fold nested error model
//! `y = x'beta + u_d + v_dj + e_djk`, and FGT poverty measures.

use std::io::{BufRead, BufReader, Read, Write};
use std::sync::Arc;

use rand::Rng;

use crate::dist::{sample_skew_normal, SkewNormalSpec};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Index structure of the population: `areas` areas, `M_d` subareas in area
/// `d`, `N_dj` units in subarea `(d, j)`. Subareas and units are numbered
/// globally; all indices are 0-based internally.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PopulationLayout {
    subarea_counts: Vec<usize>,      // M_d, len D
    unit_counts: Vec<usize>,         // N_dj, len S, global subarea order
    area_subarea_offset: Vec<usize>, // len D + 1
    subarea_unit_offset: Vec<usize>, // len S + 1
    area_unit_offset: Vec<usize>,    // len D + 1
    area_of_subarea: Vec<usize>,     // len S
}

impl PopulationLayout {
    pub fn new(subarea_counts: Vec<usize>, unit_counts: Vec<usize>) -> Result<Self> {
        if subarea_counts.is_empty() {
            return Err(Error::InvalidInput("layout needs at least one area".into()));
        }
        if subarea_counts.iter().any(|&m| m == 0) {
            return Err(Error::InvalidInput(
                "every area needs at least one subarea".into(),
            ));
        }
        let total_subareas: usize = subarea_counts.iter().sum();
        if unit_counts.len() != total_subareas {
            return Err(Error::InvalidInput(format!(
                "expected {total_subareas} subarea unit counts, got {}",
                unit_counts.len()
            )));
        }
        if unit_counts.iter().any(|&n| n == 0) {
            return Err(Error::InvalidInput(
                "every subarea needs at least one unit".into(),
            ));
        }

        let mut area_subarea_offset = Vec::with_capacity(subarea_counts.len() + 1);
        area_subarea_offset.push(0);
        for &m in &subarea_counts {
            area_subarea_offset.push(area_subarea_offset.last().unwrap() + m);
        }
        let mut subarea_unit_offset = Vec::with_capacity(unit_counts.len() + 1);
        subarea_unit_offset.push(0);
        for &n in &unit_counts {
            subarea_unit_offset.push(subarea_unit_offset.last().unwrap() + n);
        }
        let area_unit_offset: Vec<usize> = area_subarea_offset
            .iter()
            .map(|&s| subarea_unit_offset[s])
            .collect();
        let mut area_of_subarea = Vec::with_capacity(total_subareas);
        for (d, &m) in subarea_counts.iter().enumerate() {
            area_of_subarea.extend(std::iter::repeat(d).take(m));
        }

        Ok(Self {
            subarea_counts,
            unit_counts,
            area_subarea_offset,
            subarea_unit_offset,
            area_unit_offset,
            area_of_subarea,
        })
    }

    /// Layout with the same number of subareas per area and units per subarea.
    pub fn uniform(areas: usize, subareas_per_area: usize, units_per_subarea: usize) -> Result<Self> {
        Self::new(
            vec![subareas_per_area; areas],
            vec![units_per_subarea; areas * subareas_per_area],
        )
    }

    /// The paper-study layout: 40 areas, 10 subareas each, 50 units each.
    pub fn paper_study() -> Self {
        Self::uniform(40, 10, 50).expect("static layout")
    }

    pub fn areas(&self) -> usize {
        self.subarea_counts.len()
    }

    pub fn total_subareas(&self) -> usize {
        self.unit_counts.len()
    }

    pub fn total_units(&self) -> usize {
        *self.subarea_unit_offset.last().unwrap()
    }

    /// M_d
    pub fn subarea_count(&self, area: usize) -> usize {
        self.subarea_counts[area]
    }

    /// N_dj by global subarea index.
    pub fn unit_count(&self, subarea: usize) -> usize {
        self.unit_counts[subarea]
    }

    /// N_d
    pub fn units_in_area(&self, area: usize) -> usize {
        self.area_unit_offset[area + 1] - self.area_unit_offset[area]
    }

    /// Global subarea indices of an area.
    pub fn subareas_of_area(&self, area: usize) -> std::ops::Range<usize> {
        self.area_subarea_offset[area]..self.area_subarea_offset[area + 1]
    }

    /// Global unit indices of a subarea.
    pub fn units_of_subarea(&self, subarea: usize) -> std::ops::Range<usize> {
        self.subarea_unit_offset[subarea]..self.subarea_unit_offset[subarea + 1]
    }

    /// Global unit indices of an area.
    pub fn units_of_area(&self, area: usize) -> std::ops::Range<usize> {
        self.area_unit_offset[area]..self.area_unit_offset[area + 1]
    }

    pub fn area_of_subarea(&self, subarea: usize) -> usize {
        self.area_of_subarea[subarea]
    }

    /// Global subarea index of local subarea `j` within `area`.
    pub fn subarea_index(&self, area: usize, j: usize) -> usize {
        debug_assert!(j < self.subarea_counts[area]);
        self.area_subarea_offset[area] + j
    }

    /// Local subarea position within its area.
    pub fn local_subarea(&self, subarea: usize) -> usize {
        subarea - self.area_subarea_offset[self.area_of_subarea[subarea]]
    }
}

/// Census of unit-level covariates: one `p`-vector per unit, row-major, with
/// `x_1 = 1` when an intercept is used.
#[derive(Debug, Clone)]
pub struct CovariateCensus {
    layout: PopulationLayout,
    p: usize,
    x: Vec<f64>,
}

impl CovariateCensus {
    pub fn new(layout: PopulationLayout, p: usize, x: Vec<f64>) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidInput("covariate dimension must be >= 1".into()));
        }
        if x.len() != layout.total_units() * p {
            return Err(Error::InvalidInput(format!(
                "covariate matrix has {} entries, expected {} units x {p}",
                x.len(),
                layout.total_units()
            )));
        }
        Ok(Self { layout, p, x })
    }

    pub fn layout(&self) -> &PopulationLayout {
        &self.layout
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, unit: usize) -> &[f64] {
        &self.x[unit * self.p..(unit + 1) * self.p]
    }
}

/// Inclusion probability for the first non-intercept covariate:
/// `0.2 + 0.4 d / D + 0.4 j / M_d` with 1-based `d`, `j`.
pub fn x1_probability(layout: &PopulationLayout, area: usize, local_subarea: usize) -> f64 {
    let d = (area + 1) as f64;
    let j = (local_subarea + 1) as f64;
    0.2 + 0.4 * d / layout.areas() as f64 + 0.4 * j / layout.subarea_count(area) as f64
}

/// Generate the study covariates `x = (1, x1, x2)` with
/// `x1 ~ Bernoulli(0.2 + 0.4 d / D + 0.4 j / M_d)` and `x2 ~ Bernoulli(0.2)`.
pub fn generate_covariates(layout: &PopulationLayout, stream: RngStream) -> CovariateCensus {
    let p = 3;
    let mut x = Vec::with_capacity(layout.total_units() * p);
    let mut rng = stream.rng();
    for area in 0..layout.areas() {
        for s in layout.subareas_of_area(area) {
            let p1 = x1_probability(layout, area, layout.local_subarea(s));
            for _ in layout.units_of_subarea(s) {
                x.push(1.0);
                x.push(f64::from(rng.random::<f64>() < p1));
                x.push(f64::from(rng.random::<f64>() < 0.2));
            }
        }
    }
    CovariateCensus::new(layout.clone(), p, x).expect("generated covariates are consistent")
}

/// Parameters of the two-fold model: regression coefficients and the three
/// calibrated error distributions.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub beta: Vec<f64>,
    pub area_effect: SkewNormalSpec,
    pub subarea_effect: SkewNormalSpec,
    pub unit_error: SkewNormalSpec,
}

/// A generated finite population: log welfare `y`, welfare `E = exp(y)`, and
/// the true random effects retained for diagnostics.
#[derive(Debug, Clone)]
pub struct Population {
    census: Arc<CovariateCensus>,
    y: Vec<f64>,
    welfare: Vec<f64>,
    true_u: Vec<f64>,
    true_v: Vec<f64>,
}

impl Population {
    pub fn layout(&self) -> &PopulationLayout {
        self.census.layout()
    }

    pub fn census(&self) -> &Arc<CovariateCensus> {
        &self.census
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// E = exp(y), elementwise.
    pub fn welfare(&self) -> &[f64] {
        &self.welfare
    }

    pub fn true_area_effects(&self) -> &[f64] {
        &self.true_u
    }

    pub fn true_subarea_effects(&self) -> &[f64] {
        &self.true_v
    }
}

/// Generate one population from the two-fold model:
/// `y_djk = x'beta + u_d + v_dj + e_djk`, `E = exp(y)`.
pub fn generate_population(
    census: Arc<CovariateCensus>,
    params: &ModelParams,
    stream: RngStream,
) -> Result<Population> {
    let layout = census.layout();
    if params.beta.len() != census.p() {
        return Err(Error::InvalidInput(format!(
            "beta has length {}, covariates have p = {}",
            params.beta.len(),
            census.p()
        )));
    }
    let u = sample_skew_normal(&params.area_effect, layout.areas(), stream.child(0));
    let v = sample_skew_normal(&params.subarea_effect, layout.total_subareas(), stream.child(1));
    let e = sample_skew_normal(&params.unit_error, layout.total_units(), stream.child(2));

    let n = layout.total_units();
    let mut y = Vec::with_capacity(n);
    let mut welfare = Vec::with_capacity(n);
    for area in 0..layout.areas() {
        for s in layout.subareas_of_area(area) {
            let level = u[area] + v[s];
            for unit in layout.units_of_subarea(s) {
                let xb: f64 = census
                    .row(unit)
                    .iter()
                    .zip(&params.beta)
                    .map(|(x, b)| x * b)
                    .sum();
                let value = xb + level + e[unit];
                y.push(value);
                welfare.push(value.exp());
            }
        }
    }
    Ok(Population {
        census,
        y,
        welfare,
        true_u: u,
        true_v: v,
    })
}

/// `fraction` times the median welfare; the median of an even count is the
/// midpoint of the two central order statistics.
pub fn poverty_line(population: &Population, fraction: f64) -> f64 {
    fraction * median(population.welfare())
}

fn median(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("welfare values are comparable"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Poverty line, FGT order and welfare shift for one measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FgtParams {
    poverty_line: f64,
    alpha: u8,
    shift: f64,
}

impl FgtParams {
    pub fn new(poverty_line: f64, alpha: u8, shift: f64) -> Result<Self> {
        if !(poverty_line > 0.0) || !poverty_line.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "poverty line must be positive and finite, got {poverty_line}"
            )));
        }
        if alpha > 2 {
            return Err(Error::InvalidParameter(format!(
                "FGT order must be 0, 1 or 2, got {alpha}"
            )));
        }
        Ok(Self {
            poverty_line,
            alpha,
            shift,
        })
    }

    pub fn poverty_line(&self) -> f64 {
        self.poverty_line
    }

    pub fn alpha(&self) -> u8 {
        self.alpha
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// "inc" / "gap" / "sev"
    pub fn indicator(&self) -> &'static str {
        match self.alpha {
            0 => "inc",
            1 => "gap",
            _ => "sev",
        }
    }
}

/// Unit-level FGT value `((z - E)/z)^alpha * 1{E < z}` with `E = exp(y) - shift`.
#[inline]
pub fn fgt_unit(y: f64, params: &FgtParams) -> f64 {
    fgt_welfare(y.exp() - params.shift, params)
}

/// Same as [`fgt_unit`] for an already-transformed welfare value.
#[inline]
pub fn fgt_welfare(welfare: f64, params: &FgtParams) -> f64 {
    let z = params.poverty_line;
    if welfare < z {
        match params.alpha {
            0 => 1.0,
            1 => (z - welfare) / z,
            _ => {
                let g = (z - welfare) / z;
                g * g
            }
        }
    } else {
        0.0
    }
}

/// Mean of the unit FGT values of one subarea.
pub fn fgt_subarea(unit_values: &[f64]) -> f64 {
    debug_assert!(!unit_values.is_empty());
    unit_values.iter().sum::<f64>() / unit_values.len() as f64
}

/// Area measure from per-subarea measures: `sum_j N_dj F_dj / N_d`.
/// `subarea_values` is indexed by global subarea.
pub fn fgt_area(layout: &PopulationLayout, area: usize, subarea_values: &[f64]) -> f64 {
    let mut weighted = 0.0;
    for s in layout.subareas_of_area(area) {
        weighted += layout.unit_count(s) as f64 * subarea_values[s];
    }
    weighted / layout.units_in_area(area) as f64
}

/// FGT measures of a population for a list of parameter sets, per subarea and
/// per area. Values are stored parameter-major: entry `a * count + index`.
#[derive(Debug, Clone)]
pub struct FgtValues {
    pub per_subarea: Vec<f64>,
    pub per_area: Vec<f64>,
}

pub fn fgt_population(population: &Population, params: &[FgtParams]) -> FgtValues {
    let layout = population.layout();
    let (s_total, d_total) = (layout.total_subareas(), layout.areas());
    let mut per_subarea = vec![0.0; params.len() * s_total];
    let mut per_area = vec![0.0; params.len() * d_total];
    for (a, fp) in params.iter().enumerate() {
        for area in 0..d_total {
            let mut area_sum = 0.0;
            for s in layout.subareas_of_area(area) {
                let mut sum = 0.0;
                for unit in layout.units_of_subarea(s) {
                    sum += fgt_welfare(population.welfare[unit] - fp.shift, fp);
                }
                per_subarea[a * s_total + s] = sum / layout.unit_count(s) as f64;
                area_sum += sum;
            }
            per_area[a * d_total + area] = area_sum / layout.units_in_area(area) as f64;
        }
    }
    FgtValues {
        per_subarea,
        per_area,
    }
}

/// Write a population as CSV with columns `d, j, k, x2..x_p, y` (1-based
/// labels, intercept column omitted).
pub fn export_population_csv<W: Write>(population: &Population, writer: W) -> Result<()> {
    let census = population.census();
    let layout = census.layout();
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["d".to_string(), "j".to_string(), "k".to_string()];
    for c in 1..census.p() {
        header.push(format!("x{}", c + 1));
    }
    header.push("y".to_string());
    w.write_record(&header)?;
    for area in 0..layout.areas() {
        for s in layout.subareas_of_area(area) {
            let j = layout.local_subarea(s);
            for (k, unit) in layout.units_of_subarea(s).enumerate() {
                let mut record = vec![
                    (area + 1).to_string(),
                    (j + 1).to_string(),
                    (k + 1).to_string(),
                ];
                for c in 1..census.p() {
                    record.push(census.row(unit)[c].to_string());
                }
                record.push(population.y[unit].to_string());
                w.write_record(&record)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a population exported by [`export_population_csv`]. Rows must be
/// ordered by `(d, j, k)` with contiguous 1-based labels. The intercept column
/// is reconstructed; true random effects are not recoverable and left empty.
pub fn import_population_csv<R: Read>(reader: R) -> Result<Population> {
    let mut lines = BufReader::new(reader).lines();
    let header = match lines.next() {
        Some(line) => line?,
        None => return Err(Error::CsvRow { row: 1, message: "empty file".into() }),
    };
    let columns: Vec<&str> = header.trim_end_matches('\r').split(',').collect();
    if columns.len() < 4 || columns[0] != "d" || columns[1] != "j" || columns[2] != "k" {
        return Err(Error::CsvRow {
            row: 1,
            message: "expected header starting with d,j,k and ending with y".into(),
        });
    }
    if *columns.last().unwrap() != "y" {
        return Err(Error::CsvRow {
            row: 1,
            message: "last column must be y".into(),
        });
    }
    // columns are d, j, k, x2..x_p, y; the intercept is implicit
    let p = columns.len() - 3;

    struct RawRow {
        d: usize,
        j: usize,
        k: usize,
        x: Vec<f64>,
        y: f64,
    }
    let mut rows: Vec<RawRow> = Vec::new();
    for (idx, line) in lines.enumerate() {
        let row_no = idx + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim_end_matches('\r').split(',').collect();
        if fields.len() != columns.len() {
            return Err(Error::CsvRow {
                row: row_no,
                message: format!("expected {} fields, got {}", columns.len(), fields.len()),
            });
        }
        let parse_usize = |s: &str, what: &str| {
            s.parse::<usize>().map_err(|_| Error::CsvRow {
                row: row_no,
                message: format!("bad {what} value '{s}'"),
            })
        };
        let parse_f64 = |s: &str, what: &str| {
            s.parse::<f64>().map_err(|_| Error::CsvRow {
                row: row_no,
                message: format!("bad {what} value '{s}'"),
            })
        };
        let d = parse_usize(fields[0], "d")?;
        let j = parse_usize(fields[1], "j")?;
        let k = parse_usize(fields[2], "k")?;
        if d == 0 || j == 0 || k == 0 {
            return Err(Error::CsvRow {
                row: row_no,
                message: "labels are 1-based".into(),
            });
        }
        let mut x = Vec::with_capacity(p);
        x.push(1.0);
        for (c, field) in fields[3..fields.len() - 1].iter().enumerate() {
            x.push(parse_f64(field, &format!("x{}", c + 2))?);
        }
        let y = parse_f64(fields[fields.len() - 1], "y")?;
        rows.push(RawRow { d, j, k, x, y });
    }
    if rows.is_empty() {
        return Err(Error::CsvRow { row: 2, message: "no data rows".into() });
    }

    // Rebuild the ragged layout from the ordered (d, j, k) labels.
    let mut subarea_counts: Vec<usize> = Vec::new();
    let mut unit_counts: Vec<usize> = Vec::new();
    let mut prev: Option<(usize, usize, usize)> = None;
    for (i, r) in rows.iter().enumerate() {
        let row_no = i + 2;
        let expected_order = Err(Error::CsvRow {
            row: row_no,
            message: format!(
                "rows must be ordered by (d, j, k) with contiguous labels; got d={} j={} k={}",
                r.d, r.j, r.k
            ),
        });
        match prev {
            None => {
                if r.d != 1 || r.j != 1 || r.k != 1 {
                    return expected_order;
                }
                subarea_counts.push(1);
                unit_counts.push(1);
            }
            Some((pd, pj, pk)) => {
                if r.d == pd && r.j == pj && r.k == pk + 1 {
                    *unit_counts.last_mut().unwrap() += 1;
                } else if r.d == pd && r.j == pj + 1 && r.k == 1 {
                    *subarea_counts.last_mut().unwrap() += 1;
                    unit_counts.push(1);
                } else if r.d == pd + 1 && r.j == 1 && r.k == 1 {
                    subarea_counts.push(1);
                    unit_counts.push(1);
                } else {
                    return expected_order;
                }
            }
        }
        prev = Some((r.d, r.j, r.k));
    }

    let layout = PopulationLayout::new(subarea_counts, unit_counts)?;
    let mut x = Vec::with_capacity(rows.len() * p);
    let mut y = Vec::with_capacity(rows.len());
    let mut welfare = Vec::with_capacity(rows.len());
    for r in &rows {
        x.extend_from_slice(&r.x);
        y.push(r.y);
        welfare.push(r.y.exp());
    }
    let census = Arc::new(CovariateCensus::new(layout, p, x)?);
    Ok(Population {
        census,
        y,
        welfare,
        true_u: Vec::new(),
        true_v: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_params(sd: f64) -> ModelParams {
        ModelParams {
            beta: vec![3.0, 0.03, -0.04],
            area_effect: SkewNormalSpec::normal(sd).unwrap(),
            subarea_effect: SkewNormalSpec::normal(sd).unwrap(),
            unit_error: SkewNormalSpec::normal(sd).unwrap(),
        }
    }

    fn paper_params(lambda_v: f64, lambda_e: f64) -> ModelParams {
        ModelParams {
            beta: vec![3.0, 0.03, -0.04],
            area_effect: SkewNormalSpec::normal(0.5).unwrap(),
            subarea_effect: SkewNormalSpec::new(lambda_v, 0.25).unwrap(),
            unit_error: SkewNormalSpec::new(lambda_e, 0.5).unwrap(),
        }
    }

    #[test]
    fn layout_bookkeeping() {
        let layout = PopulationLayout::new(vec![2, 3], vec![4, 5, 6, 7, 8]).unwrap();
        assert_eq!(layout.areas(), 2);
        assert_eq!(layout.total_subareas(), 5);
        assert_eq!(layout.total_units(), 30);
        assert_eq!(layout.units_in_area(0), 9);
        assert_eq!(layout.units_in_area(1), 21);
        assert_eq!(layout.subareas_of_area(1), 2..5);
        assert_eq!(layout.units_of_subarea(2), 9..15);
        assert_eq!(layout.area_of_subarea(2), 1);
        assert_eq!(layout.local_subarea(4), 2);
        assert_eq!(layout.subarea_index(1, 2), 4);
        assert!(PopulationLayout::new(vec![], vec![]).is_err());
        assert!(PopulationLayout::new(vec![1], vec![0]).is_err());
        assert!(PopulationLayout::new(vec![2], vec![3]).is_err());
    }

    #[test]
    fn x1_probability_formula() {
        let layout = PopulationLayout::paper_study();
        // d=1, j=1 (1-based): 0.2 + 0.01 + 0.04
        assert!((x1_probability(&layout, 0, 0) - 0.25).abs() < 1e-15);
        // last subarea of the last area saturates at 1.0
        assert!((x1_probability(&layout, 39, 9) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn covariates_saturated_subarea_and_x2_rate() {
        let layout = PopulationLayout::paper_study();
        let census = generate_covariates(&layout, RngStream::new(51));
        // every unit of the last subarea of the last area has x1 = 1
        let last = layout.subarea_index(39, 9);
        for unit in layout.units_of_subarea(last) {
            assert_eq!(census.row(unit)[1], 1.0);
        }
        let mean_x2: f64 = (0..layout.total_units())
            .map(|u| census.row(u)[2])
            .sum::<f64>()
            / layout.total_units() as f64;
        assert!((mean_x2 - 0.2).abs() < 0.01, "mean x2 {mean_x2}");
    }

    #[test]
    fn population_degenerates_without_noise() {
        let layout = PopulationLayout::uniform(3, 2, 4).unwrap();
        let census = Arc::new(generate_covariates(&layout, RngStream::new(52)));
        let params = tiny_params(1e-8);
        let pop = generate_population(census.clone(), &params, RngStream::new(53)).unwrap();
        for unit in 0..layout.total_units() {
            let xb: f64 = census
                .row(unit)
                .iter()
                .zip(&params.beta)
                .map(|(x, b)| x * b)
                .sum();
            assert!((pop.y()[unit] - xb).abs() < 1e-6);
            assert_eq!(pop.welfare()[unit], pop.y()[unit].exp());
        }
    }

    #[test]
    fn population_variance_additivity() {
        let layout = PopulationLayout::paper_study();
        let census = Arc::new(generate_covariates(&layout, RngStream::new(54)));
        let params = paper_params(0.0, 0.0);
        let pop = generate_population(census.clone(), &params, RngStream::new(55)).unwrap();
        let noise: Vec<f64> = (0..layout.total_units())
            .map(|u| {
                let xb: f64 = census
                    .row(u)
                    .iter()
                    .zip(&params.beta)
                    .map(|(x, b)| x * b)
                    .sum();
                pop.y()[u] - xb
            })
            .collect();
        let mean = noise.iter().sum::<f64>() / noise.len() as f64;
        let sd = (noise.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / noise.len() as f64).sqrt();
        let expected = (0.25f64 + 0.0625 + 0.25).sqrt();
        assert!((sd - expected).abs() < 0.03 * expected, "sd {sd} vs {expected}");
    }

    #[test]
    fn per_area_mean_noise_clt_bound() {
        let layout = PopulationLayout::paper_study();
        let census = Arc::new(generate_covariates(&layout, RngStream::new(56)));
        let params = paper_params(0.0, 0.0);
        let pop = generate_population(census.clone(), &params, RngStream::new(57)).unwrap();
        // the area mean of v + e averages v over M_d subareas, not N_d units:
        // Var = sigma_v^2 / M_d + sigma_e^2 / N_d
        let bound = 3.0 * (0.0625f64 / 10.0 + 0.25 / 500.0).sqrt();
        let mut within = 0;
        for area in 0..layout.areas() {
            let mut sum = 0.0;
            for u in layout.units_of_area(area) {
                let xb: f64 = census
                    .row(u)
                    .iter()
                    .zip(&params.beta)
                    .map(|(x, b)| x * b)
                    .sum();
                sum += pop.y()[u] - xb - pop.true_area_effects()[area];
            }
            if (sum / 500.0).abs() <= bound {
                within += 1;
            }
        }
        assert!(within >= 38, "only {within} of 40 areas within CLT bound");
    }

    #[test]
    fn poverty_line_small_cases() {
        let layout = PopulationLayout::new(vec![1], vec![3]).unwrap();
        let census = Arc::new(CovariateCensus::new(layout, 1, vec![1.0; 3]).unwrap());
        let make = |values: Vec<f64>| Population {
            census: census.clone(),
            y: values.iter().map(|e: &f64| e.ln()).collect(),
            welfare: values,
            true_u: vec![],
            true_v: vec![],
        };
        let pop = make(vec![1.0, 2.0, 3.0]);
        assert!((poverty_line(&pop, 0.6) - 1.2).abs() < 1e-12);

        let layout4 = PopulationLayout::new(vec![1], vec![4]).unwrap();
        let census4 = Arc::new(CovariateCensus::new(layout4, 1, vec![1.0; 4]).unwrap());
        let pop4 = Population {
            census: census4,
            y: vec![0.0; 4],
            welfare: vec![1.0, 2.0, 3.0, 4.0],
            true_u: vec![],
            true_v: vec![],
        };
        assert!((poverty_line(&pop4, 0.6) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn poverty_line_stable_across_seeds() {
        let layout = PopulationLayout::paper_study();
        let census = Arc::new(generate_covariates(&layout, RngStream::new(58)));
        let params = paper_params(0.0, 0.0);
        let ratios: Vec<f64> = (0..20)
            .map(|i| {
                let pop =
                    generate_population(census.clone(), &params, RngStream::new(59).child(i))
                        .unwrap();
                poverty_line(&pop, 0.6) / 3f64.exp()
            })
            .collect();
        // center: 0.6 exp(mean x'beta - 3); the realized area effects move a
        // single population's median by sd(ln z) ~ sigma_u / sqrt(D) ~ 8%
        let center = 0.606_484_793_314_274;
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!((mean - center).abs() < 0.05 * center, "mean ratio {mean}");
        for r in &ratios {
            assert!((r - center).abs() < 0.25 * center, "ratio {r}");
        }
    }

    #[test]
    fn fgt_unit_values() {
        let z10 = |alpha| FgtParams::new(10.0, alpha, 0.0).unwrap();
        assert_eq!(fgt_unit(5f64.ln(), &z10(0)), 1.0);
        assert!((fgt_unit(5f64.ln(), &z10(1)) - 0.5).abs() < 1e-12);
        assert!((fgt_unit(2.5f64.ln(), &z10(2)) - 0.5625).abs() < 1e-12);
        assert_eq!(fgt_unit(20f64.ln(), &z10(0)), 0.0);
        assert!(FgtParams::new(0.0, 0, 0.0).is_err());
        assert!(FgtParams::new(1.0, 3, 0.0).is_err());
    }

    #[test]
    fn fgt_aggregation_weighted_mean() {
        // two subareas of sizes 10 and 30 with measures 1.0 and 0.0
        let layout = PopulationLayout::new(vec![2], vec![10, 30]).unwrap();
        let area = fgt_area(&layout, 0, &[1.0, 0.0]);
        assert!((area - 0.25).abs() < 1e-15);
        assert!((fgt_subarea(&[1.0; 7]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fgt_population_matches_double_sum() {
        let layout = PopulationLayout::new(vec![2, 1], vec![3, 5, 4]).unwrap();
        let census = Arc::new(generate_covariates(&layout, RngStream::new(60)));
        let params = paper_params(1.0, 3.0);
        let pop = generate_population(census, &params, RngStream::new(61)).unwrap();
        let fp = [
            FgtParams::new(poverty_line(&pop, 0.6), 0, 0.0).unwrap(),
            FgtParams::new(poverty_line(&pop, 0.6), 1, 0.0).unwrap(),
        ];
        let values = fgt_population(&pop, &fp);
        for (a, f) in fp.iter().enumerate() {
            for area in 0..layout.areas() {
                // direct double sum over all units of the area
                let mut direct = 0.0;
                for s in layout.subareas_of_area(area) {
                    for unit in layout.units_of_subarea(s) {
                        direct += fgt_unit(pop.y()[unit], f);
                    }
                }
                direct /= layout.units_in_area(area) as f64;
                let got = values.per_area[a * layout.areas() + area];
                assert!((got - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn population_regeneration_is_deterministic() {
        let layout = PopulationLayout::uniform(4, 3, 6).unwrap();
        let census = Arc::new(generate_covariates(&layout, RngStream::new(62)));
        let params = paper_params(1.0, 3.0);
        let a = generate_population(census.clone(), &params, RngStream::new(63)).unwrap();
        let b = generate_population(census, &params, RngStream::new(63)).unwrap();
        assert_eq!(a.y(), b.y());
        assert_eq!(a.true_area_effects(), b.true_area_effects());
    }

    #[test]
    fn csv_round_trip() {
        let layout = PopulationLayout::new(vec![2, 1], vec![2, 3, 2]).unwrap();
        let census = Arc::new(generate_covariates(&layout, RngStream::new(64)));
        let params = paper_params(0.0, 3.0);
        let pop = generate_population(census, &params, RngStream::new(65)).unwrap();
        let mut buffer = Vec::new();
        export_population_csv(&pop, &mut buffer).unwrap();
        let back = import_population_csv(buffer.as_slice()).unwrap();
        assert_eq!(back.layout(), pop.layout());
        assert_eq!(back.y(), pop.y());
        for unit in 0..pop.layout().total_units() {
            assert_eq!(back.census().row(unit), pop.census().row(unit));
        }
    }

    #[test]
    fn csv_import_reports_row_numbers() {
        let text = "d,j,k,x2,x3,y\n1,1,1,0,1,2.5\n1,1,3,0,1,2.5\n";
        let err = import_population_csv(text.as_bytes()).unwrap_err();
        match err {
            Error::CsvRow { row, .. } => assert_eq!(row, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
