//! OLS estimation on the sample and decomposition of residuals into estimated
//! area effects, subarea effects and unit errors.
//!
//! The decomposition follows the moment estimators
//! `u_hat_d = mean of residuals in area d`,
//! `v_hat_dj = subarea residual mean - u_hat_d`,
//! `e_hat_djk = residual - subarea residual mean`,
//! which reconstruct the residual exactly: `u_hat + v_hat + e_hat = r_hat`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sampling::SampleData;

/// Relative threshold on the QR diagonal below which the design is treated as
/// rank deficient.
const RANK_TOLERANCE: f64 = 1e-10;

/// Ordinary least squares fit: coefficients, their covariance under the
/// homoskedastic i.i.d. formula `sigma2 (X'X)^{-1}`, and unit residuals in
/// sample order.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub beta_hat: DVector<f64>,
    pub cov_beta: DMatrix<f64>,
    pub residuals: Vec<f64>,
    pub sigma2_hat: f64,
}

/// Solve the least squares problem by QR factorization of the design matrix.
pub fn fit_ols(sample: &SampleData) -> Result<OlsFit> {
    let n = sample.len();
    let p = sample.p;
    if n <= p {
        return Err(Error::InvalidInput(format!(
            "need more observations than parameters (n = {n}, p = {p})"
        )));
    }
    let x = DMatrix::from_row_slice(n, p, &sample.x);
    let y = DVector::from_column_slice(&sample.y);

    let qr = x.clone().qr();
    let r = qr.r();
    let max_diag = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let min_diag = (0..p).map(|i| r[(i, i)].abs()).fold(f64::INFINITY, f64::min);
    if !(max_diag > 0.0) || min_diag < RANK_TOLERANCE * max_diag {
        return Err(Error::SingularDesign(format!(
            "QR diagonal ratio {:.3e} below {RANK_TOLERANCE:.0e}",
            if max_diag > 0.0 { min_diag / max_diag } else { 0.0 }
        )));
    }

    let qty = qr.q().transpose() * &y;
    let beta_hat = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::SingularDesign("upper-triangular solve failed".into()))?;

    let fitted = &x * &beta_hat;
    let residuals: Vec<f64> = (0..n).map(|i| y[i] - fitted[i]).collect();
    let rss: f64 = residuals.iter().map(|r| r * r).sum();
    let sigma2_hat = rss / (n - p) as f64;

    // (X'X)^{-1} = R^{-1} R^{-T}
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::SingularDesign("R inversion failed".into()))?;
    let cov_beta = sigma2_hat * (&r_inv * r_inv.transpose());

    Ok(OlsFit {
        beta_hat,
        cov_beta,
        residuals,
        sigma2_hat,
    })
}

/// Estimated random effects: one value per sampled area, per sampled subarea,
/// and per sampled unit, each linked to its labels.
///
/// The one-fold variant stores its per-cluster effects in the subarea slot and
/// leaves the area slot empty.
#[derive(Debug, Clone)]
pub struct RandomEffectEstimates {
    /// Sampled area indices, ascending.
    pub area_labels: Vec<usize>,
    /// `u_hat_d` aligned with `area_labels`.
    pub u_hat: Vec<f64>,
    /// Sampled global subarea indices, ascending.
    pub subarea_labels: Vec<usize>,
    /// `v_hat_dj` aligned with `subarea_labels` (cluster effects `u_hat_t` for
    /// the one-fold variant).
    pub v_hat: Vec<f64>,
    /// `e_hat_djk` in sample order.
    pub e_hat: Vec<f64>,
}

impl RandomEffectEstimates {
    pub fn is_one_fold(&self) -> bool {
        self.area_labels.is_empty()
    }
}

// Per-subarea residual means in sample order; relies on samples being grouped
// by subarea.
fn subarea_means(fit: &OlsFit, sample: &SampleData) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = sample.len();
    let mut labels = Vec::new();
    let mut means = Vec::new();
    let mut per_unit_mean = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let s = sample.subarea_labels[start];
        let mut end = start;
        let mut sum = 0.0;
        while end < n && sample.subarea_labels[end] == s {
            sum += fit.residuals[end];
            end += 1;
        }
        let mean = sum / (end - start) as f64;
        labels.push(s);
        means.push(mean);
        per_unit_mean[start..end].fill(mean);
        start = end;
    }
    (labels, means, per_unit_mean)
}

/// Two-fold decomposition of OLS residuals.
pub fn decompose_residuals(fit: &OlsFit, sample: &SampleData) -> RandomEffectEstimates {
    let n = sample.len();
    debug_assert_eq!(fit.residuals.len(), n);

    // area means
    let mut area_labels = Vec::new();
    let mut u_hat = Vec::new();
    let mut area_of_unit_mean = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let d = sample.area_labels[start];
        let mut end = start;
        let mut sum = 0.0;
        while end < n && sample.area_labels[end] == d {
            sum += fit.residuals[end];
            end += 1;
        }
        let mean = sum / (end - start) as f64;
        area_labels.push(d);
        u_hat.push(mean);
        area_of_unit_mean[start..end].fill(mean);
        start = end;
    }

    let (subarea_labels, sub_means, per_unit_sub_mean) = subarea_means(fit, sample);

    // v_hat needs the area mean of each subarea's area
    let mut v_hat = Vec::with_capacity(subarea_labels.len());
    {
        let mut unit_cursor = 0;
        for (i, &_s) in subarea_labels.iter().enumerate() {
            let area_mean = area_of_unit_mean[unit_cursor];
            v_hat.push(sub_means[i] - area_mean);
            // advance past this subarea's units
            let s = subarea_labels[i];
            while unit_cursor < n && sample.subarea_labels[unit_cursor] == s {
                unit_cursor += 1;
            }
        }
    }

    let e_hat: Vec<f64> = fit
        .residuals
        .iter()
        .zip(&per_unit_sub_mean)
        .map(|(r, m)| r - m)
        .collect();

    RandomEffectEstimates {
        area_labels,
        u_hat,
        subarea_labels,
        v_hat,
        e_hat,
    }
}

/// One-fold fit treating each sampled subarea as a single-index cluster:
/// the cluster effect is the subarea residual mean and the unit error is the
/// residual minus it. The OLS step is identical to the two-fold fit.
pub fn fit_onefold(sample: &SampleData) -> Result<(OlsFit, RandomEffectEstimates)> {
    let fit = fit_ols(sample)?;
    let (subarea_labels, cluster_effects, per_unit_mean) = subarea_means(&fit, sample);
    let e_hat: Vec<f64> = fit
        .residuals
        .iter()
        .zip(&per_unit_mean)
        .map(|(r, m)| r - m)
        .collect();
    let effects = RandomEffectEstimates {
        area_labels: Vec::new(),
        u_hat: Vec::new(),
        subarea_labels,
        v_hat: cluster_effects,
        e_hat,
    };
    Ok((fit, effects))
}

#[cfg(test)]
mod tests {
    use super::*;

    // build a SampleData directly from parallel arrays
    fn sample_from(
        y: Vec<f64>,
        x: Vec<f64>,
        p: usize,
        area_labels: Vec<usize>,
        subarea_labels: Vec<usize>,
    ) -> SampleData {
        let n = y.len();
        SampleData {
            y,
            x,
            p,
            area_labels,
            subarea_labels,
            unit_ids: (0..n).collect(),
        }
    }

    #[test]
    fn exact_linear_data_recovers_beta() {
        let xs: Vec<f64> = (0..12)
            .flat_map(|i| vec![1.0, i as f64, (i * i) as f64 % 5.0])
            .collect();
        let beta0 = [2.0, -1.5, 0.25];
        let y: Vec<f64> = (0..12)
            .map(|i| {
                let row = &xs[i * 3..(i + 1) * 3];
                row.iter().zip(&beta0).map(|(x, b)| x * b).sum()
            })
            .collect();
        let sample = sample_from(y, xs, 3, vec![0; 12], vec![0; 12]);
        let fit = fit_ols(&sample).unwrap();
        for (b, b0) in fit.beta_hat.iter().zip(&beta0) {
            assert!((b - b0).abs() < 1e-10);
        }
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-10));
    }

    #[test]
    fn five_point_regression_hand_solution() {
        // {(1,2),(2,4),(3,5),(4,4),(5,5)} with intercept: beta = (2.2, 0.6)
        let x = vec![1.0, 1.0, 1.0, 2.0, 1.0, 3.0, 1.0, 4.0, 1.0, 5.0];
        let y = vec![2.0, 4.0, 5.0, 4.0, 5.0];
        let sample = sample_from(y, x, 2, vec![0; 5], vec![0; 5]);
        let fit = fit_ols(&sample).unwrap();
        assert!((fit.beta_hat[0] - 2.2).abs() < 1e-12, "intercept {}", fit.beta_hat[0]);
        assert!((fit.beta_hat[1] - 0.6).abs() < 1e-12, "slope {}", fit.beta_hat[1]);
    }

    #[test]
    fn rank_deficient_design_rejected() {
        // duplicated column
        let x = vec![1.0, 2.0, 2.0, 1.0, 3.0, 3.0, 1.0, 4.0, 4.0, 1.0, 5.0, 5.0];
        let y = vec![1.0, 2.0, 3.0, 4.0];
        let sample = sample_from(y, x, 3, vec![0; 4], vec![0; 4]);
        match fit_ols(&sample) {
            Err(Error::SingularDesign(_)) => {}
            other => panic!("expected singular-design error, got {other:?}"),
        }
    }

    #[test]
    fn needs_more_rows_than_columns() {
        let x = vec![1.0, 2.0, 1.0, 3.0];
        let y = vec![1.0, 2.0];
        let sample = sample_from(y, x, 2, vec![0; 2], vec![0; 2]);
        assert!(fit_ols(&sample).is_err());
    }

    #[test]
    fn constant_residuals_decompose_to_area_effect() {
        // y = 0.3, x = intercept-only with beta forced through zero is awkward;
        // instead feed residuals directly by fitting y = c + noise with c
        // removed: use two areas so the intercept cannot absorb both.
        let x = vec![1.0; 8];
        // area 0 residual 0.3 above area mean-model; easier to test on the
        // decomposition itself with a synthetic fit
        let sample = sample_from(
            vec![0.0; 8],
            x,
            1,
            vec![0, 0, 0, 0, 1, 1, 1, 1],
            vec![0, 0, 1, 1, 2, 2, 3, 3],
        );
        let fit = OlsFit {
            beta_hat: DVector::zeros(1),
            cov_beta: DMatrix::zeros(1, 1),
            residuals: vec![0.3, 0.3, 0.3, 0.3, -0.1, -0.1, -0.1, -0.1],
            sigma2_hat: 0.0,
        };
        let eff = decompose_residuals(&fit, &sample);
        assert_eq!(eff.area_labels, vec![0, 1]);
        assert!((eff.u_hat[0] - 0.3).abs() < 1e-15);
        assert!((eff.u_hat[1] + 0.1).abs() < 1e-15);
        assert!(eff.v_hat.iter().all(|v| v.abs() < 1e-15));
        assert!(eff.e_hat.iter().all(|e| e.abs() < 1e-15));
    }

    #[test]
    fn two_subarea_hand_decomposition() {
        // residuals [1,1] and [3,5] in one area: u = 2.5, v = (-1.5, 1.5),
        // e = (0,0) and (-1,+1)
        let sample = sample_from(
            vec![0.0; 4],
            vec![1.0; 4],
            1,
            vec![0; 4],
            vec![0, 0, 1, 1],
        );
        let fit = OlsFit {
            beta_hat: DVector::zeros(1),
            cov_beta: DMatrix::zeros(1, 1),
            residuals: vec![1.0, 1.0, 3.0, 5.0],
            sigma2_hat: 0.0,
        };
        let eff = decompose_residuals(&fit, &sample);
        assert!((eff.u_hat[0] - 2.5).abs() < 1e-15);
        assert!((eff.v_hat[0] + 1.5).abs() < 1e-15);
        assert!((eff.v_hat[1] - 1.5).abs() < 1e-15);
        assert_eq!(eff.e_hat, vec![0.0, 0.0, -1.0, 1.0]);
    }

    #[test]
    fn onefold_collapses_levels() {
        // one subarea per area: one-fold cluster effect equals u_hat + v_hat
        let sample = sample_from(
            vec![1.0, 2.0, 4.0, 3.0],
            vec![1.0; 4],
            1,
            vec![0, 0, 1, 1],
            vec![0, 0, 1, 1],
        );
        let fit = fit_ols(&sample).unwrap();
        let two = decompose_residuals(&fit, &sample);
        let (_, one) = fit_onefold(&sample).unwrap();
        for (i, &s) in one.subarea_labels.iter().enumerate() {
            let d = two.subarea_labels.iter().position(|&t| t == s).unwrap();
            let two_fold_sum = two.u_hat[two
                .area_labels
                .iter()
                .position(|&a| a == sample.area_labels[i * 2])
                .unwrap()]
                + two.v_hat[d];
            assert!((one.v_hat[i] - two_fold_sum).abs() < 1e-12);
        }
        // per-cluster unit errors sum to zero
        assert!((one.e_hat[0] + one.e_hat[1]).abs() < 1e-10);
        assert!((one.e_hat[2] + one.e_hat[3]).abs() < 1e-10);
    }
}
