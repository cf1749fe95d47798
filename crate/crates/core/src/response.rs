//! Zero-noise limit experiments: sweeps of the stationary density h_δ as
//! δ → 0, the explicit quadratic-response coefficient for smooth maps, decay
//! diagnostics for the derivative operators, and the Lipschitz lower-bound
//! machinery for piecewise expanding maps.

use crate::error::{Error, Result};
use crate::grid::DensityGrid;
use crate::kernels::NoiseKernel;
use crate::maps::CircleMap;
use crate::operators::{assemble_convolution, assemble_fourier, assemble_ulam, compose_noisy,
                       Backend, TransferMatrix};
use crate::solver::{resolvent_apply, stationary_density, SolveReport};
use rayon::prelude::*;
use std::f64::consts::PI;

/// One row of a zero-noise experiment.
#[derive(Debug, Clone, Copy)]
pub struct SweepRecord {
    pub delta: f64,
    /// ‖h_δ − h₀‖_{L¹}
    pub dist_l1: f64,
    /// ‖h_δ − h₀‖_{W^{1,1}}
    pub dist_w11: f64,
    /// ‖(h_δ − h₀)/δ² − R‖_{W^{1,1}}; spectral sweeps only
    pub response_residual: Option<f64>,
    /// Lipschitz constant of h_δ on the grid
    pub lip_hdelta: f64,
    pub solver_report: SolveReport,
    /// δ under-resolved by the grid: excluded from fits
    pub flagged: bool,
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub backend: Backend,
    /// quadrature grid for spectral assembly (≥ 8N); unused for Ulam
    pub quad_points: usize,
    pub solver_tol: f64,
    pub max_iterations: usize,
}

impl SweepConfig {
    pub fn spectral(n_modes: usize) -> SweepConfig {
        SweepConfig {
            backend: Backend::Fourier(n_modes),
            quad_points: 8 * n_modes,
            solver_tol: 1e-13,
            max_iterations: 100_000,
        }
    }

    pub fn ulam(n: usize) -> SweepConfig {
        SweepConfig {
            backend: Backend::Ulam(n),
            quad_points: 0,
            solver_tol: 1e-12,
            max_iterations: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitField {
    DistL1,
    DistW11,
    ResponseResidual,
    LipHdelta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitModel {
    /// value ≈ C δᵖ
    Power,
    /// value ≈ C (δ|log δ|)ᵖ
    PowerLog,
}

#[derive(Debug, Clone, Copy)]
pub struct FitResult {
    pub model: FitModel,
    pub exponent: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    pub points_used: usize,
}

/// R = (σ²/2)(Id − L_T)⁻¹ h₀″ — the coefficient of δ² in the expansion of
/// h_δ for a smooth expanding map. Needs the spectral representation: the
/// second derivative is taken modewise.
pub fn quadratic_coefficient(
    lt: &TransferMatrix,
    h0: &DensityGrid,
    sigma2: f64,
) -> Result<DensityGrid> {
    if !lt.is_spectral() {
        return Err(Error::Unsupported(
            "quadratic response coefficient needs the spectral backend; \
             a BV density has no pointwise second derivative"
                .into(),
        ));
    }
    let h0pp = h0.derivative(2);
    let r = resolvent_apply(lt, &h0pp)?.scale(0.5 * sigma2);
    debug_assert!(r.mass().abs() <= 1e-9);
    Ok(r)
}

fn assemble_deterministic(map: &CircleMap, config: &SweepConfig) -> Result<TransferMatrix> {
    match config.backend {
        Backend::Fourier(n_modes) => assemble_fourier(map, n_modes, config.quad_points),
        Backend::Ulam(n) => assemble_ulam(map, n),
    }
}

/// Solve h₀ at the configured resolution and verify it is converged by
/// re-solving at double resolution.
fn solve_h0_validated(
    map: &CircleMap,
    config: &SweepConfig,
) -> Result<(TransferMatrix, DensityGrid)> {
    let lt = assemble_deterministic(map, config)?;
    let (h0, _) = stationary_density(&lt, config.solver_tol, config.max_iterations)?;
    let (refined, compare) = match config.backend {
        Backend::Fourier(n_modes) => {
            let cfg = SweepConfig { backend: Backend::Fourier(2 * n_modes),
                                    quad_points: 2 * config.quad_points, ..config.clone() };
            let lt2 = assemble_deterministic(map, &cfg)?;
            let (h02, _) = stationary_density(&lt2, config.solver_tol, config.max_iterations)?;
            (h02.to_modes(n_modes), h0.clone())
        }
        Backend::Ulam(n) => {
            let cfg = SweepConfig { backend: Backend::Ulam(2 * n), ..config.clone() };
            let lt2 = assemble_deterministic(map, &cfg)?;
            let (h02, _) = stationary_density(&lt2, config.solver_tol, config.max_iterations)?;
            (h02.to_bins(n), h0.clone())
        }
    };
    let drift = refined.sub(&compare)?.l1();
    if drift > 1e-4 {
        return Err(Error::Resolution(format!(
            "h₀ moves by {drift:.3e} in L¹ when the resolution doubles; raise the resolution"
        )));
    }
    Ok((lt, h0))
}

/// Run the zero-noise experiment: for each δ solve the stationary density of
/// L_δ = Q_δ L_T and record its distances to h₀. Spectral sweeps also carry
/// the quadratic-response residual against R = (σ²/2)(Id−L_T)⁻¹h₀″.
pub fn zero_noise_sweep(
    map: &CircleMap,
    kernel: &NoiseKernel,
    deltas: &[f64],
    config: &SweepConfig,
) -> Result<Vec<SweepRecord>> {
    for &d in deltas {
        if !(d > 0.0 && d <= 0.25) {
            return Err(Error::InvalidDelta(d));
        }
    }
    for w in deltas.windows(2) {
        if w[1] >= w[0] {
            return Err(Error::InvalidDelta(w[1]));
        }
    }
    let (lt, h0) = solve_h0_validated(map, config)?;
    let r_coeff = match config.backend {
        Backend::Fourier(_) => Some(quadratic_coefficient(&lt, &h0, kernel.sigma2())?),
        Backend::Ulam(_) => None,
    };
    let records: Result<Vec<SweepRecord>> = deltas
        .par_iter()
        .map(|&delta| {
            let q = assemble_convolution(kernel, delta, config.backend)?;
            let l = compose_noisy(lt.clone(), q)?;
            let flagged = l.meta.under_resolved;
            let (h, report) = stationary_density(&l, config.solver_tol, config.max_iterations)?;
            let diff = h.sub(&h0)?;
            let response_residual = match &r_coeff {
                Some(r) => Some(diff.scale(1.0 / (delta * delta)).sub(r)?.w11()),
                None => None,
            };
            let rec = SweepRecord {
                delta,
                dist_l1: diff.l1(),
                dist_w11: diff.w11(),
                response_residual,
                lip_hdelta: h.lip(),
                solver_report: report,
                flagged,
            };
            assert!(
                rec.dist_l1.is_finite() && rec.dist_w11.is_finite() && rec.lip_hdelta.is_finite(),
                "sweep produced non-finite distances at δ = {delta}"
            );
            Ok(rec)
        })
        .collect();
    records
}

fn field_value(rec: &SweepRecord, field: FitField) -> Option<f64> {
    match field {
        FitField::DistL1 => Some(rec.dist_l1),
        FitField::DistW11 => Some(rec.dist_w11),
        FitField::ResponseResidual => rec.response_residual,
        FitField::LipHdelta => Some(rec.lip_hdelta),
    }
}

fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    let mean_y = sy / n;
    let ss_tot: f64 = ys.iter().map(|y| (y - mean_y).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum();
    let r2 = if ss_tot <= 1e-30 { 1.0 } else { 1.0 - ss_res / ss_tot };
    (slope, intercept, r2)
}

/// Least-squares fit of log(field) against log δ (Power) or
/// log(δ|log δ|) (PowerLog). Flagged records and non-positive values are
/// excluded; at least 4 points must remain.
pub fn fit_exponent(
    records: &[SweepRecord],
    field: FitField,
    model: FitModel,
) -> Result<FitResult> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for rec in records {
        if rec.flagged {
            continue;
        }
        let v = match field_value(rec, field) {
            Some(v) if v > 0.0 => v,
            _ => continue,
        };
        let x = match model {
            FitModel::Power => rec.delta.ln(),
            FitModel::PowerLog => rec.delta.ln() + rec.delta.ln().abs().ln(),
        };
        xs.push(x);
        ys.push(v.ln());
    }
    if xs.len() < 4 {
        return Err(Error::TooFewRecords { needed: 4, got: xs.len() });
    }
    let (slope, intercept, r2) = least_squares(&xs, &ys);
    Ok(FitResult {
        model,
        exponent: slope,
        prefactor: intercept.exp(),
        r_squared: r2,
        points_used: xs.len(),
    })
}

/// Eight trig polynomials {sin, cos}(2πmx), m = 1..4, each normalized to
/// unit W^{3,1} norm — the probe suite for the operator-decay diagnostics.
pub fn trig_test_suite(n_modes: usize) -> Vec<DensityGrid> {
    let mut suite = Vec::new();
    for m in 1..=4 {
        let w = 2.0 * PI * m as f64;
        for sin_phase in [false, true] {
            let f = DensityGrid::modes_from_fn(n_modes, move |x| {
                if sin_phase {
                    (w * x).sin()
                } else {
                    (w * x).cos()
                }
            });
            let norm = f.wk1(3);
            suite.push(f.scale(1.0 / norm));
        }
    }
    suite
}

/// sup over the suite of ‖(L_δ − L_T) f‖_{W^{1,1}} / (δ ‖f‖_{W^{3,1}}),
/// per δ. Decays linearly in δ when the map is smooth: the noisy operator
/// has vanishing first derivative at δ = 0.
pub fn derivative_operator_decay(
    map: &CircleMap,
    kernel: &NoiseKernel,
    deltas: &[f64],
    test_suite: &[DensityGrid],
) -> Result<Vec<(f64, f64)>> {
    let n_modes = match test_suite.first() {
        Some(f) if !f.is_bins() => f.resolution(),
        _ => {
            return Err(Error::Representation(
                "decay diagnostic needs a non-empty mode-space test suite".into(),
            ))
        }
    };
    if test_suite.iter().any(|f| f.is_bins() || f.resolution() != n_modes) {
        return Err(Error::Representation(
            "test suite must share one spectral resolution".into(),
        ));
    }
    let lt = assemble_fourier(map, n_modes, 8 * n_modes)?;
    let pushed: Vec<(DensityGrid, f64)> = test_suite
        .iter()
        .map(|f| Ok((lt.apply(f)?, f.wk1(3))))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let q = assemble_convolution(kernel, delta, Backend::Fourier(n_modes))?;
        let mut worst = 0.0f64;
        for (lf, f_w31) in &pushed {
            let diff = q.apply(lf)?.sub(lf)?;
            worst = worst.max(diff.w11() / (delta * f_w31));
        }
        out.push((delta, worst));
    }
    Ok(out)
}

/// Residuals ‖(L_δ − L_T) h₀ / δ² − (σ²/2) h₀″‖_{W^{1,1}} per δ. Bounded by
/// a constant times δ; kernels with zero third moment decay like δ².
pub fn second_derivative_check(
    map: &CircleMap,
    kernel: &NoiseKernel,
    deltas: &[f64],
    n_modes: usize,
    quad_points: usize,
) -> Result<Vec<(f64, f64)>> {
    let lt = assemble_fourier(map, n_modes, quad_points)?;
    let (h0, _) = stationary_density(&lt, 1e-13, 100_000)?;
    // feed the *pushed* density so solver tolerance does not contaminate
    // (L_δ − L_T) h₀ = (Q_δ − Id) L_T h₀
    let lh0 = lt.apply(&h0)?;
    let target = h0.derivative(2).scale(0.5 * kernel.sigma2());
    let mut out = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let q = assemble_convolution(kernel, delta, Backend::Fourier(n_modes))?;
        let diff = q.apply(&lh0)?.sub(&lh0)?;
        let residual = diff.scale(1.0 / (delta * delta)).sub(&target)?.w11();
        out.push((delta, residual));
    }
    Ok(out)
}

/// Fit lip(h_δ) ≈ C′ δ^{−q} over the unflagged records. `exponent` holds q
/// (positive for a genuinely steepening family), `prefactor` holds C′.
pub fn lipschitz_diagnostics(records: &[SweepRecord]) -> Result<FitResult> {
    let fit = fit_exponent(records, FitField::LipHdelta, FitModel::Power)?;
    Ok(FitResult { exponent: -fit.exponent, ..fit })
}

/// The sharp L¹ lower bound for approximating the two-level step density by
/// an a-Lipschitz function: bound = 1/(9a), attained by the ramp f_a that
/// climbs between the levels with slope a around the interior jump. `n` is
/// the grid for the returned discretized f_a.
pub fn best_lipschitz_bound(a: f64, n: usize) -> Result<(f64, DensityGrid)> {
    if !(a > 2.0 / 3.0) {
        return Err(Error::Unsupported(format!(
            "ramp of slope {a} does not fit: need a > 2/3"
        )));
    }
    let bound = 1.0 / (9.0 * a);
    let half_width = 1.0 / (3.0 * a);
    let f_a = DensityGrid::bins_from_fn(n, move |x| {
        if x <= 0.5 - half_width {
            2.0 / 3.0
        } else if x >= 0.5 + half_width {
            4.0 / 3.0
        } else {
            1.0 + a * (x - 0.5)
        }
    });
    Ok((bound, f_a))
}

/// The two-level stationary density of the reference piecewise map,
/// discretized exactly (levels 2/3 and 4/3 split at 1/2).
pub fn two_level_step(n: usize) -> DensityGrid {
    let mut v = vec![2.0 / 3.0; n];
    for x in v.iter_mut().skip(n / 2) {
        *x = 4.0 / 3.0;
    }
    DensityGrid::Bins(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn synthetic_records(deltas: &[f64], f: impl Fn(f64) -> f64) -> Vec<SweepRecord> {
        deltas
            .iter()
            .map(|&delta| SweepRecord {
                delta,
                dist_l1: f(delta),
                dist_w11: f(delta),
                response_residual: None,
                lip_hdelta: f(delta),
                solver_report: SolveReport {
                    iterations: 1,
                    final_residual: 0.0,
                    normalization_defect: 0.0,
                },
                flagged: false,
            })
            .collect()
    }

    #[test]
    fn fit_recovers_exact_power_law() {
        let recs = synthetic_records(&[0.2, 0.1, 0.05, 0.025, 0.0125], |d| d * d);
        let fit = fit_exponent(&recs, FitField::DistL1, FitModel::Power).unwrap();
        assert_abs_diff_eq!(fit.exponent, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.prefactor, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
        assert_eq!(fit.points_used, 5);
    }

    #[test]
    fn fit_recovers_power_log_prefactor() {
        let recs = synthetic_records(&[0.2, 0.1, 0.05, 0.025], |d| 3.0 * d * d.ln().abs());
        let fit = fit_exponent(&recs, FitField::DistL1, FitModel::PowerLog).unwrap();
        assert_abs_diff_eq!(fit.exponent, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.prefactor, 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn lipschitz_fit_recovers_inverse_law() {
        let recs = synthetic_records(&[0.2, 0.1, 0.05, 0.025], |d| 5.0 / d);
        let fit = lipschitz_diagnostics(&recs).unwrap();
        assert_abs_diff_eq!(fit.exponent, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.prefactor, 5.0, epsilon = 1e-12);
    }

    #[test]
    fn fit_excludes_flagged_and_nonpositive_records() {
        let mut recs = synthetic_records(&[0.2, 0.1, 0.05, 0.025, 0.0125, 0.00625], |d| d);
        recs[5].flagged = true;
        recs[4].dist_l1 = 0.0;
        let fit = fit_exponent(&recs, FitField::DistL1, FitModel::Power).unwrap();
        assert_eq!(fit.points_used, 4);
        assert_abs_diff_eq!(fit.exponent, 1.0, epsilon = 1e-12);
        recs[3].flagged = true;
        match fit_exponent(&recs, FitField::DistL1, FitModel::Power) {
            Err(Error::TooFewRecords { needed: 4, got: 3 }) => {}
            other => panic!("expected record-count error, got {other:?}"),
        }
    }

    #[test]
    fn quadratic_coefficient_vanishes_for_doubling() {
        let lt = assemble_fourier(&CircleMap::doubling(), 16, 128).unwrap();
        let (h0, _) = stationary_density(&lt, 1e-13, 1000).unwrap();
        let r = quadratic_coefficient(&lt, &h0, 1.0 / 3.0).unwrap();
        assert!(r.l1() <= 1e-12, "constant density has zero response");
    }

    #[test]
    fn quadratic_coefficient_rejects_ulam() {
        let lt = assemble_ulam(&CircleMap::skew_tent(), 64).unwrap();
        let h0 = two_level_step(64);
        assert!(quadratic_coefficient(&lt, &h0, 1.0 / 3.0).is_err());
    }

    #[test]
    fn quadratic_coefficient_matches_finite_difference_oracle() {
        // (h_δ − h₀)/δ² at δ = 1e−3 approximates R to ~δ²-relative accuracy
        let map = CircleMap::perturbed_doubling();
        let config = SweepConfig::spectral(64);
        let kernel = NoiseKernel::by_name("uniform").unwrap();
        let (lt, h0) = solve_h0_validated(&map, &config).unwrap();
        let r = quadratic_coefficient(&lt, &h0, kernel.sigma2()).unwrap();
        assert!(r.mass().abs() <= 1e-9);
        let delta = 1e-3;
        let q = assemble_convolution(&kernel, delta, Backend::Fourier(64)).unwrap();
        let l = compose_noisy(lt, q).unwrap();
        let (h, _) = stationary_density(&l, 1e-14, 100_000).unwrap();
        let fd = h.sub(&h0).unwrap().scale(1.0 / (delta * delta));
        let err = fd.sub(&r).unwrap().w11();
        assert!(
            err <= 1e-2 * r.w11(),
            "finite difference misses R: {err:.3e} vs ‖R‖ = {:.3e}",
            r.w11()
        );
    }

    #[test]
    fn sweep_on_doubling_is_flat() {
        // the constant density is stationary at every noise level
        let recs = zero_noise_sweep(
            &CircleMap::doubling(),
            &NoiseKernel::by_name("triangular").unwrap(),
            &[0.2, 0.1, 0.05, 0.025],
            &SweepConfig::spectral(16),
        )
        .unwrap();
        for rec in &recs {
            assert!(rec.dist_l1 <= 1e-10, "δ = {}: {}", rec.delta, rec.dist_l1);
        }
    }

    #[test]
    fn sweep_validates_delta_list() {
        let map = CircleMap::doubling();
        let kernel = NoiseKernel::by_name("uniform").unwrap();
        let config = SweepConfig::spectral(16);
        for bad in [vec![0.3, 0.1], vec![0.1, 0.2], vec![0.1, 0.1], vec![0.1, 0.0]] {
            match zero_noise_sweep(&map, &kernel, &bad, &config) {
                Err(Error::InvalidDelta(_)) => {}
                other => panic!("deltas {bad:?} should be rejected, got {other:?}"),
            }
        }
    }

    #[test]
    fn piecewise_sweep_shows_linear_lower_bound_and_steepening() {
        let recs = zero_noise_sweep(
            &CircleMap::skew_tent(),
            &NoiseKernel::by_name("uniform").unwrap(),
            &[0.1, 0.05, 0.025, 0.0125],
            &SweepConfig::ulam(512),
        )
        .unwrap();
        for rec in &recs {
            assert!(rec.response_residual.is_none());
            assert!(!rec.flagged);
            // distance comparable to δ (the linear lower bound regime) and
            // the density steepens like 1/δ
            assert!(rec.dist_l1 >= 0.05 * rec.delta, "δ = {}", rec.delta);
            assert!(rec.dist_l1 <= 10.0 * rec.delta, "δ = {}", rec.delta);
            assert!(rec.lip_hdelta * rec.delta > 0.3 && rec.lip_hdelta * rec.delta < 30.0);
        }
        for w in recs.windows(2) {
            assert!(w[1].dist_l1 < w[0].dist_l1, "distance decreases with δ");
        }
    }

    #[test]
    fn under_resolved_deltas_get_flagged() {
        let recs = zero_noise_sweep(
            &CircleMap::skew_tent(),
            &NoiseKernel::by_name("uniform").unwrap(),
            &[0.1, 0.0001],
            &SweepConfig::ulam(128),
        )
        .unwrap();
        assert!(!recs[0].flagged);
        assert!(recs[1].flagged, "δ = 1e−4 is far below the bin width of 1/128");
    }

    #[test]
    fn derivative_decay_is_linear_and_exact_for_doubling_constant() {
        let suite = trig_test_suite(32);
        assert_eq!(suite.len(), 8);
        for f in &suite {
            assert_abs_diff_eq!(f.wk1(3), 1.0, epsilon = 1e-10);
        }
        let map = CircleMap::doubling();
        let kernel = NoiseKernel::by_name("uniform").unwrap();
        // constants are fixed by the pushforward and the convolution alike
        let constant = vec![DensityGrid::constant_modes(32)];
        let ests = derivative_operator_decay(&map, &kernel, &[0.1, 0.05], &constant).unwrap();
        for (_, e) in ests {
            // zero up to assembly roundoff amplified by the W-norm
            // derivative factors (2πN)
            assert!(e <= 1e-10, "constant probe must be annihilated: {e:.3e}");
        }
    }

    #[test]
    fn derivative_decay_matches_multiplier_closed_form() {
        // doubling sends cos(4πx) to cos(2πx), so (L_δ − L_T) cos(4πx) =
        // (ρ̂_δ(1) − 1)·cos(2πx) — both factors have closed forms
        let map = CircleMap::doubling();
        let kernel = NoiseKernel::by_name("uniform").unwrap();
        let f = DensityGrid::modes_from_fn(32, |x| (4.0 * PI * x).cos());
        let f_w31 = f.wk1(3);
        let suite = vec![f];
        let delta = 0.07;
        let ests = derivative_operator_decay(&map, &kernel, &[delta], &suite).unwrap();
        let w = 2.0 * PI * delta;
        let mult_defect = (w.sin() / w - 1.0).abs();
        let cos_w11 = DensityGrid::modes_from_fn(32, |x| (2.0 * PI * x).cos()).w11();
        let want = mult_defect * cos_w11 / (delta * f_w31);
        assert_abs_diff_eq!(ests[0].1, want, epsilon = 1e-8);
    }

    #[test]
    fn second_derivative_residual_scaling_depends_on_kernel_symmetry() {
        let map = CircleMap::perturbed_doubling();
        let deltas = [0.1, 0.05, 0.025];
        // skewed kernel: third moment survives → residual ∝ δ
        let skew = NoiseKernel::by_name("skew").unwrap();
        let res = second_derivative_check(&map, &skew, &deltas, 64, 512).unwrap();
        for w in res.windows(2) {
            let ratio = w[1].1 / w[0].1;
            assert!((0.4..=0.6).contains(&ratio), "skew ratio {ratio}");
        }
        // symmetric kernel: third moment cancels → residual ∝ δ²
        let uniform = NoiseKernel::by_name("uniform").unwrap();
        let res = second_derivative_check(&map, &uniform, &deltas, 64, 512).unwrap();
        for w in res.windows(2) {
            let ratio = w[1].1 / w[0].1;
            assert!((0.2..=0.3).contains(&ratio), "uniform ratio {ratio}");
        }
    }

    #[test]
    fn second_derivative_residual_vanishes_for_doubling() {
        let res = second_derivative_check(
            &CircleMap::doubling(),
            &NoiseKernel::by_name("uniform").unwrap(),
            &[0.1, 0.05],
            32,
            256,
        )
        .unwrap();
        for (_, r) in res {
            // ~1e−15 assembly roundoff in h₀ is amplified by (2πN)³ through
            // the second derivative and the W^{1,1} norm
            assert!(r <= 1e-7, "constant h₀ has no response at any order: {r:.3e}");
        }
    }

    #[test]
    fn second_derivative_limits_scale_with_kernel_variance() {
        // ‖(Q_δ − Id) h₀‖/δ² → (σ²/2)‖h₀″‖: triangular/uniform ratio = 1/2
        let map = CircleMap::perturbed_doubling();
        let lt = assemble_fourier(&map, 64, 512).unwrap();
        let (h0, _) = stationary_density(&lt, 1e-13, 1000).unwrap();
        let lh0 = lt.apply(&h0).unwrap();
        let delta = 0.01;
        let mut norms = Vec::new();
        for name in ["triangular", "uniform"] {
            let k = NoiseKernel::by_name(name).unwrap();
            let q = assemble_convolution(&k, delta, Backend::Fourier(64)).unwrap();
            let v = q.apply(&lh0).unwrap().sub(&lh0).unwrap().scale(1.0 / (delta * delta));
            norms.push(v.w11());
        }
        let ratio = norms[0] / norms[1];
        assert!((ratio - 0.5).abs() <= 0.05 * 0.5, "variance ratio {ratio}");
    }

    #[test]
    fn kernel_variance_scaling_of_sweep_distances() {
        let map = CircleMap::perturbed_doubling();
        let config = SweepConfig::spectral(32);
        let deltas = [0.02, 0.01, 0.005, 0.0025];
        let uni = zero_noise_sweep(&map, &NoiseKernel::by_name("uniform").unwrap(), &deltas,
                                   &config).unwrap();
        let tri = zero_noise_sweep(&map, &NoiseKernel::by_name("triangular").unwrap(), &deltas,
                                    &config).unwrap();
        let ratio = tri[3].dist_w11 / uni[3].dist_w11;
        assert!((ratio - 0.5).abs() <= 0.05, "smallest-δ ratio {ratio}");
    }

    #[test]
    fn best_lipschitz_ramp_attains_its_bound() {
        let (bound, f_a) = best_lipschitz_bound(3.0, 8192).unwrap();
        assert_abs_diff_eq!(bound, 1.0 / 27.0, epsilon = 1e-15);
        let dist = f_a.sub(&two_level_step(8192)).unwrap().l1();
        assert_abs_diff_eq!(dist, 1.0 / 27.0, epsilon = 1e-6);
        // the ramp really is 3-Lipschitz on the interval (the cyclic lip
        // would see the wrap jump at 0 ≡ 1, which the interval setting
        // deliberately ignores)
        let v = f_a.bin_values().unwrap().to_vec();
        let interior_lip = v
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .fold(0.0, f64::max)
            * 8192.0;
        assert!(interior_lip <= 3.0 + 1e-9, "slope {interior_lip}");
        // steeper ramps approximate better
        let (b2, _) = best_lipschitz_bound(1000.0, 512).unwrap();
        assert_abs_diff_eq!(b2, 1.0 / 9000.0, epsilon = 1e-15);
        assert!(b2 < bound / 30.0);
        assert!(best_lipschitz_bound(0.5, 64).is_err());
        assert!(best_lipschitz_bound(2.0 / 3.0, 64).is_err());
    }

    #[test]
    fn sweep_is_deterministic() {
        let map = CircleMap::perturbed_doubling();
        let kernel = NoiseKernel::by_name("uniform").unwrap();
        let config = SweepConfig::spectral(16);
        let deltas = [0.2, 0.1, 0.05, 0.025];
        let a = zero_noise_sweep(&map, &kernel, &deltas, &config).unwrap();
        let b = zero_noise_sweep(&map, &kernel, &deltas, &config).unwrap();
        for (ra, rb) in a.iter().zip(&b) {
            assert_eq!(ra.dist_l1.to_bits(), rb.dist_l1.to_bits());
            assert_eq!(ra.dist_w11.to_bits(), rb.dist_w11.to_bits());
            assert_eq!(ra.lip_hdelta.to_bits(), rb.lip_hdelta.to_bits());
            assert_eq!(
                ra.response_residual.map(f64::to_bits),
                rb.response_residual.map(f64::to_bits)
            );
        }
    }
}
