//! Two-stage sample selection: simple random sampling without replacement of
//! subareas within each area, then of units within each sampled subarea.

use rand::Rng;

use crate::error::{Error, Result};
use crate::population::{Population, PopulationLayout};
use crate::rng::RngStream;

/// Sample sizes per stage: `m_d` subareas per area and `n_dj` units per
/// sampled subarea. Scalars are broadcast over areas.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingDesign {
    subareas_per_area: Vec<usize>,
    units_per_subarea: Vec<usize>,
}

impl SamplingDesign {
    /// Same `m_d` and `n_dj` in every area.
    pub fn uniform(areas: usize, subareas_per_area: usize, units_per_subarea: usize) -> Self {
        Self {
            subareas_per_area: vec![subareas_per_area; areas],
            units_per_subarea: vec![units_per_subarea; areas],
        }
    }

    /// Per-area sample sizes; `units_per_subarea[d]` applies to every sampled
    /// subarea of area `d`.
    pub fn per_area(subareas_per_area: Vec<usize>, units_per_subarea: Vec<usize>) -> Result<Self> {
        if subareas_per_area.len() != units_per_subarea.len() {
            return Err(Error::InvalidInput(
                "per-area design vectors have different lengths".into(),
            ));
        }
        Ok(Self {
            subareas_per_area,
            units_per_subarea,
        })
    }

    pub fn subareas_in_area(&self, area: usize) -> usize {
        self.subareas_per_area[area]
    }

    pub fn units_in_subarea(&self, area: usize) -> usize {
        self.units_per_subarea[area]
    }

    /// Check the design is drawable from the layout: `1 <= m_d <= M_d` and
    /// `1 <= n_dj <= N_dj` for every subarea that could be sampled.
    pub fn validate(&self, layout: &PopulationLayout) -> Result<()> {
        if self.subareas_per_area.len() != layout.areas() {
            return Err(Error::InvalidInput(format!(
                "design covers {} areas, layout has {}",
                self.subareas_per_area.len(),
                layout.areas()
            )));
        }
        for area in 0..layout.areas() {
            let m = self.subareas_per_area[area];
            if m == 0 || m > layout.subarea_count(area) {
                return Err(Error::InvalidInput(format!(
                    "area {}: m_d = {m} outside 1..={}",
                    area + 1,
                    layout.subarea_count(area)
                )));
            }
            let n = self.units_per_subarea[area];
            for s in layout.subareas_of_area(area) {
                if n == 0 || n > layout.unit_count(s) {
                    return Err(Error::InvalidInput(format!(
                        "area {}: n_dj = {n} outside 1..={} for subarea {}",
                        area + 1,
                        layout.unit_count(s),
                        layout.local_subarea(s) + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Membership of one drawn sample: sampled subareas per area and sampled units
/// per sampled subarea, all sorted, with O(1) membership predicates.
#[derive(Debug, Clone)]
pub struct SampleIndex {
    /// Sorted global subarea indices, grouped by area in area order.
    sampled_subareas: Vec<usize>,
    /// Sorted global unit indices per sampled subarea, aligned with
    /// `sampled_subareas`.
    sampled_units: Vec<Vec<usize>>,
    subarea_sampled: Vec<bool>,
    unit_sampled: Vec<bool>,
    total_units: usize,
}

impl SampleIndex {
    /// Global indices of all sampled subareas, sorted.
    pub fn sampled_subareas(&self) -> &[usize] {
        &self.sampled_subareas
    }

    /// Sorted sampled unit indices of the `i`-th sampled subarea.
    pub fn sampled_units(&self, i: usize) -> &[usize] {
        &self.sampled_units[i]
    }

    pub fn is_subarea_sampled(&self, subarea: usize) -> bool {
        self.subarea_sampled[subarea]
    }

    pub fn is_unit_sampled(&self, unit: usize) -> bool {
        self.unit_sampled[unit]
    }

    /// Number of sampled units over all subareas.
    pub fn total_sampled_units(&self) -> usize {
        self.total_units
    }
}

// Partial Fisher-Yates: k distinct values from 0..n, sorted.
fn srswor<R: Rng>(rng: &mut R, k: usize, n: usize) -> Vec<usize> {
    debug_assert!(k <= n);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let pick = i + rng.random_range(0..n - i);
        pool.swap(i, pick);
    }
    pool.truncate(k);
    pool.sort_unstable();
    pool
}

/// Draw a two-stage sample. Per-area substreams keep the draw independent of
/// evaluation order.
pub fn draw_sample(
    layout: &PopulationLayout,
    design: &SamplingDesign,
    stream: RngStream,
) -> Result<SampleIndex> {
    design.validate(layout)?;
    let mut sampled_subareas = Vec::new();
    let mut sampled_units = Vec::new();
    let mut subarea_sampled = vec![false; layout.total_subareas()];
    let mut unit_sampled = vec![false; layout.total_units()];
    let mut total_units = 0;

    for area in 0..layout.areas() {
        let area_stream = stream.child(area as u64);
        let m = design.subareas_in_area(area);
        let n = design.units_in_subarea(area);
        let locals = srswor(&mut area_stream.child(0).rng(), m, layout.subarea_count(area));
        for j in locals {
            let s = layout.subarea_index(area, j);
            subarea_sampled[s] = true;
            sampled_subareas.push(s);
            let first = layout.units_of_subarea(s).start;
            let units: Vec<usize> = srswor(
                &mut area_stream.child(1 + j as u64).rng(),
                n,
                layout.unit_count(s),
            )
            .into_iter()
            .map(|k| first + k)
            .collect();
            for &u in &units {
                unit_sampled[u] = true;
            }
            total_units += units.len();
            sampled_units.push(units);
        }
    }

    Ok(SampleIndex {
        sampled_subareas,
        sampled_units,
        subarea_sampled,
        unit_sampled,
        total_units,
    })
}

/// Observations extracted for the sampled units, ordered by `(d, j, k)`:
/// responses, covariate rows, and area/subarea labels (global indices).
#[derive(Debug, Clone)]
pub struct SampleData {
    pub y: Vec<f64>,
    /// Row-major n x p covariates.
    pub x: Vec<f64>,
    pub p: usize,
    pub area_labels: Vec<usize>,
    pub subarea_labels: Vec<usize>,
    pub unit_ids: Vec<usize>,
}

impl SampleData {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn x_row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }
}

/// Pull the sampled observations out of a population.
pub fn extract_sample(population: &Population, index: &SampleIndex) -> Result<SampleData> {
    let layout = population.layout();
    let census = population.census();
    if index.subarea_sampled.len() != layout.total_subareas()
        || index.unit_sampled.len() != layout.total_units()
    {
        return Err(Error::InvalidInput(
            "sample index was drawn from a different layout".into(),
        ));
    }
    let n = index.total_sampled_units();
    let p = census.p();
    let mut data = SampleData {
        y: Vec::with_capacity(n),
        x: Vec::with_capacity(n * p),
        p,
        area_labels: Vec::with_capacity(n),
        subarea_labels: Vec::with_capacity(n),
        unit_ids: Vec::with_capacity(n),
    };
    for (i, &s) in index.sampled_subareas.iter().enumerate() {
        let area = layout.area_of_subarea(s);
        for &unit in index.sampled_units(i) {
            data.y.push(population.y()[unit]);
            data.x.extend_from_slice(census.row(unit));
            data.area_labels.push(area);
            data.subarea_labels.push(s);
            data.unit_ids.push(unit);
        }
    }
    Ok(data)
}
