//! Stationary densities and resolvent solves.
//!
//! The workhorse is power iteration — Markov operators applied to a positive
//! start contract onto the leading eigenvector at the spectral-gap rate, and
//! every representation applies in O(nnz) or O(n log n). A deflated direct
//! solve backs it up when the gap is too small, and carries the resolvent
//! `(Id − L)⁻¹` on the mass-zero subspace.

use crate::error::{Error, Result};
use crate::grid::DensityGrid;
use crate::operators::TransferMatrix;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

#[derive(Debug, Clone, Copy)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_residual: f64,
    /// L¹ mass clipped from negative bins plus the scaling applied to
    /// restore unit mass; ~1e−15 unless something is wrong
    pub normalization_defect: f64,
}

/// Leading fixed density of a Markov operator, normalized to unit mass.
/// Power iteration from the constant density; if `max_iter` passes without
/// the L¹ residual dropping below `tol`, falls back to a deflated direct
/// solve (which densifies the operator — fine at spectral and abstract
/// sizes, expensive for large Ulam grids).
pub fn stationary_density(
    op: &TransferMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<(DensityGrid, SolveReport)> {
    let mut v = if op.is_spectral() {
        DensityGrid::constant_modes(op.resolution())
    } else {
        DensityGrid::constant_bins(op.resolution())
    };
    let mut last_res = f64::INFINITY;
    for it in 1..=max_iter {
        let next = op.apply(&v)?;
        let mass = next.mass();
        if !mass.is_finite() || mass.abs() < 1e-300 {
            return Err(Error::NonConvergence { iterations: it, residual: f64::NAN });
        }
        let next = next.scale(1.0 / mass);
        last_res = next.sub(&v)?.l1();
        v = next;
        if last_res < tol {
            return finalize(op, v, it);
        }
    }
    // spectral gap too small for iteration: solve (Id − L + deflation) u = e
    let direct = direct_stationary(op)?;
    let res = op.apply(&direct)?.sub(&direct)?.l1();
    if res > tol.max(1e-9) {
        return Err(Error::NonConvergence { iterations: max_iter, residual: last_res.min(res) });
    }
    finalize(op, direct, max_iter)
}

fn finalize(
    op: &TransferMatrix,
    v: DensityGrid,
    iterations: usize,
) -> Result<(DensityGrid, SolveReport)> {
    let (v, clipped) = match v {
        DensityGrid::Bins(mut b) => {
            let n = b.len() as f64;
            let mut clip = 0.0;
            for x in b.iter_mut() {
                if *x < 0.0 {
                    clip += -*x;
                    *x = 0.0;
                }
            }
            (DensityGrid::Bins(b), clip / n)
        }
        m @ DensityGrid::Modes(_) => (m, 0.0),
    };
    let mass = v.mass();
    if !mass.is_finite() || mass.abs() < 1e-300 {
        return Err(Error::NonConvergence { iterations, residual: f64::NAN });
    }
    let v = v.scale(1.0 / mass);
    let final_residual = op.apply(&v)?.sub(&v)?.l1();
    Ok((
        v,
        SolveReport {
            iterations,
            final_residual,
            normalization_defect: clipped + (mass - 1.0).abs(),
        },
    ))
}

fn direct_stationary(op: &TransferMatrix) -> Result<DensityGrid> {
    if op.is_spectral() {
        let m = op.to_dense_complex()?;
        let dim = m.nrows();
        let center = (dim - 1) / 2;
        let mut k = DMatrix::<Complex64>::identity(dim, dim) - m;
        k[(center, center)] += Complex64::new(1.0, 0.0);
        let mut rhs = DVector::<Complex64>::zeros(dim);
        rhs[center] = Complex64::new(1.0, 0.0);
        let sol = k.lu().solve(&rhs).ok_or(Error::SingularSystem)?;
        Ok(DensityGrid::Modes(sol.as_slice().to_vec()))
    } else {
        let m = op.to_dense_real()?;
        let n = m.nrows();
        let k = DMatrix::<f64>::identity(n, n) - m
            + DMatrix::from_element(n, n, 1.0 / n as f64);
        let rhs = DVector::from_element(n, 1.0);
        let sol = k.lu().solve(&rhs).ok_or(Error::SingularSystem)?;
        Ok(DensityGrid::Bins(sol.as_slice().to_vec()))
    }
}

/// u = (Id − L)⁻¹ g on the mass-zero subspace. Requires |mass(g)| ≤ 1e−9;
/// the solved u is checked to satisfy ‖u − L u − g‖₁ ≤ 1e−9.
pub fn resolvent_apply(op: &TransferMatrix, g: &DensityGrid) -> Result<DensityGrid> {
    let gm = g.mass();
    if gm.abs() > 1e-9 {
        return Err(Error::MassNotZero(gm));
    }
    let u = if op.is_spectral() {
        let m = op.to_dense_complex()?;
        let dim = m.nrows();
        let center = (dim - 1) / 2;
        let mut k = DMatrix::<Complex64>::identity(dim, dim) - m;
        // row k=0 of (Id − L) vanishes for a Markov operator; pin mass(u) = 0
        k[(center, center)] += Complex64::new(1.0, 0.0);
        let mut rhs = DVector::from_column_slice(g.mode_coeffs().ok_or_else(|| {
            Error::Representation("spectral resolvent needs a mode-space density".into())
        })?);
        rhs[center] = Complex64::new(0.0, 0.0);
        let sol = k.lu().solve(&rhs).ok_or(Error::SingularSystem)?;
        DensityGrid::Modes(sol.as_slice().to_vec())
    } else {
        let m = op.to_dense_real()?;
        let n = m.nrows();
        let k = DMatrix::<f64>::identity(n, n) - m
            + DMatrix::from_element(n, n, 1.0 / n as f64);
        let rhs = DVector::from_column_slice(g.bin_values().ok_or_else(|| {
            Error::Representation("bin-space resolvent needs a bin density".into())
        })?);
        let sol = k.lu().solve(&rhs).ok_or(Error::SingularSystem)?;
        DensityGrid::Bins(sol.as_slice().to_vec())
    };
    let residual = u.sub(&op.apply(&u)?)?.sub(g)?.l1();
    if residual > 1e-9 {
        return Err(Error::NonConvergence { iterations: 0, residual });
    }
    Ok(u)
}

/// Truncated Neumann series Σ_{j≤terms} L^j g — an independent slow check
/// on `resolvent_apply` when the operator is strictly contracting.
pub fn neumann_apply(op: &TransferMatrix, g: &DensityGrid, terms: usize) -> Result<DensityGrid> {
    let mut sum = g.clone();
    let mut term = g.clone();
    for _ in 0..terms {
        term = op.apply(&term)?;
        sum = sum.add(&term)?;
    }
    Ok(sum)
}

/// Fit ‖Lᵐ p‖₁ ≈ C ρᵐ for a mass-zero probe p: returns (ρ, C). ρ near 1
/// flags an operator without a usable gap (e.g. the identity); decay below
/// 1e−13 is treated as the rounding floor and excluded from the fit.
pub fn equilibrium_rate(
    op: &TransferMatrix,
    probe: &DensityGrid,
    n_iters: usize,
) -> Result<(f64, f64)> {
    let pm = probe.mass();
    if pm.abs() > 1e-9 {
        return Err(Error::MassNotZero(pm));
    }
    let mut pts: Vec<(f64, f64)> = Vec::new();
    let mut v = probe.clone();
    for m in 1..=n_iters {
        v = op.apply(&v)?;
        let norm = v.l1();
        if norm < 1e-13 {
            break;
        }
        pts.push((m as f64, norm.ln()));
    }
    if pts.len() < 3 {
        return Err(Error::TooFewRecords { needed: 3, got: pts.len() });
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    Ok((slope.exp(), intercept.exp()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::NoiseKernel;
    use crate::maps::CircleMap;
    use crate::operators::{assemble_convolution, assemble_fourier, assemble_ulam, compose_noisy,
                           Backend, OperatorKind};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use std::f64::consts::PI;

    fn three_state() -> TransferMatrix {
        let m = DMatrix::from_row_slice(3, 3, &[
            0.5, 0.2, 0.3, //
            0.3, 0.6, 0.1, //
            0.2, 0.2, 0.6,
        ]);
        TransferMatrix::from_dense_real(m, OperatorKind::Deterministic)
    }

    /// stationary vector of a 3-state chain by the diagonal-cofactor formula
    fn three_state_pi() -> [f64; 3] {
        let m = [[0.5, 0.2, 0.3], [0.3, 0.6, 0.1], [0.2, 0.2, 0.6]];
        let a = |i: usize, j: usize| (if i == j { 1.0 } else { 0.0 }) - m[i][j];
        let c0 = a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1);
        let c1 = a(0, 0) * a(2, 2) - a(0, 2) * a(2, 0);
        let c2 = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
        let s = c0 + c1 + c2;
        [c0 / s, c1 / s, c2 / s]
    }

    #[test]
    fn three_state_chain_matches_cofactor_formula() {
        let (h, rep) = stationary_density(&three_state(), 1e-14, 10_000).unwrap();
        assert!(rep.final_residual <= 1e-13);
        assert!(rep.normalization_defect <= 1e-12);
        let pi = three_state_pi();
        for (v, want) in h.bin_values().unwrap().iter().zip(pi) {
            // bins carry density normalization: probability = value / n
            assert_abs_diff_eq!(v / 3.0, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn fallback_direct_solve_agrees_with_power_iteration() {
        let (via_power, _) = stationary_density(&three_state(), 1e-14, 10_000).unwrap();
        // two iterations cannot reach 1e−14, forcing the deflated solve
        let (via_direct, _) = stationary_density(&three_state(), 1e-14, 2).unwrap();
        assert!(via_power.sub(&via_direct).unwrap().l1() <= 1e-11);
    }

    #[test]
    fn skew_tent_stationary_is_the_two_level_step() {
        let lt = assemble_ulam(&CircleMap::skew_tent(), 256).unwrap();
        let (h, rep) = stationary_density(&lt, 1e-13, 100_000).unwrap();
        assert!(rep.final_residual <= 1e-13);
        let v = h.bin_values().unwrap();
        for (i, x) in v.iter().enumerate() {
            let want = if i < 128 { 2.0 / 3.0 } else { 4.0 / 3.0 };
            assert_abs_diff_eq!(*x, want, epsilon = 1e-11);
        }
    }

    #[test]
    fn spectral_power_and_direct_agree_on_noisy_map() {
        let lt = assemble_fourier(&CircleMap::perturbed_doubling(), 32, 256).unwrap();
        let q = assemble_convolution(&NoiseKernel::by_name("uniform").unwrap(), 0.1,
                                     Backend::Fourier(32)).unwrap();
        let l = compose_noisy(lt, q).unwrap();
        let (via_power, rep) = stationary_density(&l, 1e-13, 100_000).unwrap();
        assert!(rep.iterations < 1000, "gap should make this fast");
        let (via_direct, _) = stationary_density(&l, 1e-13, 1).unwrap();
        assert!(via_power.sub(&via_direct).unwrap().l1() <= 1e-10);
        assert_abs_diff_eq!(via_power.mass(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn doubling_resolvent_has_closed_form() {
        // the doubling pushforward shifts mode k → it survives only at 2k:
        // (Id − L)⁻¹ cos(4πx) = cos(4πx) + cos(2πx), exactly
        let lt = assemble_fourier(&CircleMap::doubling(), 16, 128).unwrap();
        let g = DensityGrid::modes_from_fn(16, |x| (4.0 * PI * x).cos());
        let u = resolvent_apply(&lt, &g).unwrap();
        let want = DensityGrid::modes_from_fn(16, |x| (4.0 * PI * x).cos() + (2.0 * PI * x).cos());
        assert!(u.sub(&want).unwrap().l1() <= 1e-10);
    }

    #[test]
    fn resolvent_matches_neumann_series_on_contracting_chain() {
        // M = 0.4·uniform + 0.6·cyclic-shift: contracts mass-zero by 0.6
        let n = 5;
        let mut m = DMatrix::from_element(n, n, 0.4 / n as f64);
        for j in 0..n {
            m[((j + 1) % n, j)] += 0.6;
        }
        let op = TransferMatrix::from_dense_real(m, OperatorKind::Deterministic);
        let g = DensityGrid::Bins(vec![1.0, -1.0, 2.0, -2.0, 0.0]);
        let direct = resolvent_apply(&op, &g).unwrap();
        let series = neumann_apply(&op, &g, 200).unwrap();
        assert!(direct.sub(&series).unwrap().l1() <= 1e-10);
    }

    #[test]
    fn resolvent_rejects_nonzero_mass() {
        let lt = assemble_fourier(&CircleMap::doubling(), 16, 128).unwrap();
        let g = DensityGrid::constant_modes(16);
        match resolvent_apply(&lt, &g) {
            Err(Error::MassNotZero(m)) => assert_abs_diff_eq!(m, 1.0, epsilon = 1e-12),
            other => panic!("expected mass error, got {other:?}"),
        }
    }

    #[test]
    fn equilibrium_rate_sees_the_gap_and_the_identity() {
        let lt = assemble_ulam(&CircleMap::perturbed_doubling(), 128).unwrap();
        let probe = DensityGrid::bins_from_fn(128, |x| (2.0 * PI * x).cos());
        let (rate, c) = equilibrium_rate(&lt, &probe, 40).unwrap();
        assert!(rate > 0.01 && rate < 0.9, "expanding map must equilibrate: rate = {rate}");
        assert!(c.is_finite() && c > 0.0);

        let id = assemble_convolution(&NoiseKernel::by_name("uniform").unwrap(), 0.0,
                                      Backend::Ulam(128)).unwrap();
        let (rate, _) = equilibrium_rate(&id, &probe, 40).unwrap();
        assert_abs_diff_eq!(rate, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn composed_ulam_stationary_is_a_probability_density() {
        let lt = assemble_ulam(&CircleMap::skew_tent(), 1024).unwrap();
        let q = assemble_convolution(&NoiseKernel::by_name("uniform").unwrap(), 0.05,
                                     Backend::Ulam(1024)).unwrap();
        let l = compose_noisy(lt, q).unwrap();
        let (h, rep) = stationary_density(&l, 1e-12, 100_000).unwrap();
        assert!(rep.final_residual <= 1e-12);
        assert_abs_diff_eq!(h.mass(), 1.0, epsilon = 1e-14);
        assert!(h.bin_values().unwrap().iter().all(|v| *v >= 0.0));
        // noise keeps the density of bounded variation, comparable to h₀
        assert!(h.bv() < 4.0);
    }
}
