//! Discretized transfer operators: the deterministic pushforward L_T, the
//! noise convolution Q_δ, and their composition L_δ = Q_δ · L_T, in two
//! backends — Ulam bin-transition matrices (sparse + circulant) and
//! Fourier–Galerkin truncations (dense complex + diagonal multiplier).
//! Operators act on `DensityGrid` column vectors; Markov means columns sum
//! to one (Ulam) or the k=0 row is the unit coordinate row (spectral).

use crate::error::{Error, Result};
use crate::fftutil;
use crate::grid::DensityGrid;
use crate::kernels::NoiseKernel;
use crate::maps::{self, CircleMap};
use crate::quadrature;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::io::Write;

/// Discretization backend and resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    /// n uniform bins
    Ulam(usize),
    /// Fourier modes |k| ≤ N
    Fourier(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    Deterministic,
    Convolution,
    Composed,
}

#[derive(Debug, Clone, Default)]
pub struct OperatorMeta {
    pub map: Option<String>,
    pub kernel: Option<String>,
    pub delta: Option<f64>,
    /// δ under a quarter bin width: the kernel is not resolved by the grid
    pub under_resolved: bool,
}

/// Column-compressed sparse matrix; enough for Ulam pushforward matrices.
#[derive(Debug, Clone)]
pub struct Csc {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl Csc {
    /// Build from (row, col, value) triplets, summing duplicates.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Csc {
        triplets.sort_by_key(|t| (t.1, t.0));
        let mut col_ptr = vec![0usize; n + 1];
        let mut row_idx: Vec<usize> = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                row_idx.push(r);
                vals.push(v);
                col_ptr[c + 1] += 1;
                last = Some((r, c));
            }
        }
        for c in 0..n {
            col_ptr[c + 1] += col_ptr[c];
        }
        Csc { n, col_ptr, row_idx, vals }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for c in 0..self.n {
            let vc = v[c];
            if vc == 0.0 {
                continue;
            }
            for idx in self.col_ptr[c]..self.col_ptr[c + 1] {
                out[self.row_idx[idx]] += self.vals[idx] * vc;
            }
        }
        out
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.n)
            .map(|c| self.vals[self.col_ptr[c]..self.col_ptr[c + 1]].iter().sum())
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for c in 0..self.n {
            for idx in self.col_ptr[c]..self.col_ptr[c + 1] {
                m[(self.row_idx[idx], c)] += self.vals[idx];
            }
        }
        m
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }
}

#[derive(Debug, Clone)]
pub enum Repr {
    /// Ulam pushforward (bin space)
    SparseReal(Csc),
    /// Small dense stochastic matrices (tests, abstract families)
    DenseReal(DMatrix<f64>),
    /// Cyclic convolution by first column `col`; `hat` is its cached DFT
    Circulant { col: Vec<f64>, hat: Vec<Complex64> },
    /// Fourier–Galerkin truncation, rows/cols indexed by k + N
    DenseComplex(DMatrix<Complex64>),
    /// Diagonal Fourier multiplier ρ̂_δ(k)
    DiagComplex(Vec<Complex64>),
    /// outer ∘ inner, kept factored (never densified during iteration)
    Composed(Box<TransferMatrix>, Box<TransferMatrix>),
}

#[derive(Debug, Clone)]
pub struct TransferMatrix {
    pub repr: Repr,
    pub kind: OperatorKind,
    pub meta: OperatorMeta,
}

impl TransferMatrix {
    /// Wrap a dense column-stochastic matrix (finite-state Markov operator).
    pub fn from_dense_real(m: DMatrix<f64>, kind: OperatorKind) -> TransferMatrix {
        TransferMatrix { repr: Repr::DenseReal(m), kind, meta: OperatorMeta::default() }
    }

    pub fn resolution(&self) -> usize {
        match &self.repr {
            Repr::SparseReal(c) => c.n,
            Repr::DenseReal(m) => m.nrows(),
            Repr::Circulant { col, .. } => col.len(),
            Repr::DenseComplex(m) => (m.nrows() - 1) / 2,
            Repr::DiagComplex(d) => (d.len() - 1) / 2,
            Repr::Composed(_, inner) => inner.resolution(),
        }
    }

    pub fn is_spectral(&self) -> bool {
        match &self.repr {
            Repr::DenseComplex(_) | Repr::DiagComplex(_) => true,
            Repr::Composed(outer, _) => outer.is_spectral(),
            _ => false,
        }
    }

    pub fn apply(&self, g: &DensityGrid) -> Result<DensityGrid> {
        match (&self.repr, g) {
            (Repr::SparseReal(m), DensityGrid::Bins(v)) if m.n == v.len() => {
                Ok(DensityGrid::Bins(m.apply(v)))
            }
            (Repr::DenseReal(m), DensityGrid::Bins(v)) if m.ncols() == v.len() => {
                let out = m * DVector::from_column_slice(v);
                Ok(DensityGrid::Bins(out.as_slice().to_vec()))
            }
            (Repr::Circulant { hat, col }, DensityGrid::Bins(v)) if col.len() == v.len() => {
                let n = v.len();
                let mut buf: Vec<Complex64> =
                    v.iter().map(|x| Complex64::new(*x, 0.0)).collect();
                fftutil::fft_forward(&mut buf);
                for (b, h) in buf.iter_mut().zip(hat) {
                    *b *= h;
                }
                fftutil::fft_inverse(&mut buf);
                Ok(DensityGrid::Bins(buf.into_iter().map(|z| z.re / n as f64).collect()))
            }
            (Repr::DenseComplex(m), DensityGrid::Modes(c)) if m.ncols() == c.len() => {
                let out = m * DVector::from_column_slice(c);
                Ok(DensityGrid::Modes(out.as_slice().to_vec()))
            }
            (Repr::DiagComplex(d), DensityGrid::Modes(c)) if d.len() == c.len() => {
                Ok(DensityGrid::Modes(c.iter().zip(d).map(|(x, m)| x * m).collect()))
            }
            (Repr::Composed(outer, inner), _) => outer.apply(&inner.apply(g)?),
            _ => Err(Error::Representation(
                "operator and density have mismatched representation or resolution".into(),
            )),
        }
    }

    /// Max deviation of the Markov property: column-sum defect (real reprs)
    /// or deviation of the k=0 row from the unit coordinate row (spectral).
    pub fn markov_defect(&self) -> f64 {
        match &self.repr {
            Repr::SparseReal(m) => m
                .col_sums()
                .iter()
                .map(|s| (s - 1.0).abs())
                .fold(0.0, f64::max),
            Repr::DenseReal(m) => (0..m.ncols())
                .map(|c| (m.column(c).sum() - 1.0).abs())
                .fold(0.0, f64::max),
            Repr::Circulant { col, .. } => (col.iter().sum::<f64>() - 1.0).abs(),
            Repr::DenseComplex(m) => {
                let n = (m.nrows() - 1) / 2;
                (0..m.ncols())
                    .map(|c| {
                        let want = if c == n { 1.0 } else { 0.0 };
                        (m[(n, c)] - Complex64::new(want, 0.0)).norm()
                    })
                    .fold(0.0, f64::max)
            }
            Repr::DiagComplex(d) => {
                let n = (d.len() - 1) / 2;
                (d[n] - Complex64::new(1.0, 0.0)).norm()
            }
            Repr::Composed(outer, inner) => outer.markov_defect().max(inner.markov_defect()),
        }
    }

    /// Dense real form (bin-space operators only). Composition is multiplied
    /// out here — meant for solver fallbacks and export, not iteration.
    pub fn to_dense_real(&self) -> Result<DMatrix<f64>> {
        match &self.repr {
            Repr::SparseReal(m) => Ok(m.to_dense()),
            Repr::DenseReal(m) => Ok(m.clone()),
            Repr::Circulant { col, .. } => {
                let n = col.len();
                Ok(DMatrix::from_fn(n, n, |i, j| col[(i + n - j) % n]))
            }
            Repr::Composed(outer, inner) => Ok(outer.to_dense_real()? * inner.to_dense_real()?),
            _ => Err(Error::Representation(
                "spectral operator has no dense real form".into(),
            )),
        }
    }

    /// Dense complex form (spectral operators only).
    pub fn to_dense_complex(&self) -> Result<DMatrix<Complex64>> {
        match &self.repr {
            Repr::DenseComplex(m) => Ok(m.clone()),
            Repr::DiagComplex(d) => {
                Ok(DMatrix::from_fn(d.len(), d.len(), |i, j| {
                    if i == j {
                        d[i]
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                }))
            }
            Repr::Composed(outer, inner) => {
                Ok(outer.to_dense_complex()? * inner.to_dense_complex()?)
            }
            _ => Err(Error::Representation(
                "bin-space operator has no dense complex form".into(),
            )),
        }
    }

    /// CSV dump of the dense matrix (complex entries as re/im column pairs).
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        if self.is_spectral() {
            let m = self.to_dense_complex()?;
            for i in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols())
                    .map(|j| format!("{:.16e},{:.16e}", m[(i, j)].re, m[(i, j)].im))
                    .collect();
                writeln!(w, "{}", row.join(","))?;
            }
        } else {
            let m = self.to_dense_real()?;
            for i in 0..m.nrows() {
                let row: Vec<String> =
                    (0..m.ncols()).map(|j| format!("{:.16e}", m[(i, j)])).collect();
                writeln!(w, "{}", row.join(","))?;
            }
        }
        Ok(())
    }
}

/// Ulam discretization of L_T on n uniform bins: entry (i, j) is the fraction
/// of bin j carried into bin i, assembled per branch by cutting each bin at
/// the branch preimages of bin boundaries. Exact (to rounding) for affine
/// branches whose breakpoints align with the grid; the monotone branch solver
/// keeps smooth branches accurate to ~1e−15.
///
/// Intended for n ≥ 32; tiny n is permitted for structural checks.
pub fn assemble_ulam(map: &CircleMap, n: usize) -> Result<TransferMatrix> {
    assert!(n >= 2, "Ulam grid needs at least two bins");
    let n_f = n as f64;
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    for view in map.branch_views() {
        let (vlo, vhi) = (view.lift.eval(view.lo), view.lift.eval(view.hi));
        let (rmin, rmax) = (vlo.min(vhi), vlo.max(vhi));
        let mut cuts: Vec<f64> = vec![view.lo, view.hi];
        // bin boundaries inside the branch domain
        let j_lo = (view.lo * n_f).ceil() as i64;
        let j_hi = (view.hi * n_f).floor() as i64;
        for j in j_lo..=j_hi {
            cuts.push(j as f64 / n_f);
        }
        // preimages of bin boundaries in the lift range
        let m_lo = (rmin * n_f - 1e-9).ceil() as i64;
        let m_hi = (rmax * n_f + 1e-9).floor() as i64;
        for m in m_lo..=m_hi {
            let target = (m as f64 / n_f).clamp(rmin, rmax);
            if let Some(x) = maps::solve_monotone(view.lift, view.dlift, view.lo, view.hi, target)
            {
                cuts.push(x);
            }
        }
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-14);
        for pair in cuts.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if b - a <= 1e-14 {
                continue;
            }
            let mid = 0.5 * (a + b);
            let xbin = ((mid * n_f) as usize).min(n - 1);
            let y = view.lift.eval(mid).rem_euclid(1.0);
            let ybin = ((y * n_f) as usize).min(n - 1);
            triplets.push((ybin, xbin, (b - a) * n_f));
        }
    }
    let matrix = Csc::from_triplets(n, triplets);
    let tm = TransferMatrix {
        repr: Repr::SparseReal(matrix),
        kind: OperatorKind::Deterministic,
        meta: OperatorMeta { map: Some(map.name().into()), ..Default::default() },
    };
    let defect = tm.markov_defect();
    if defect > 1e-12 {
        return Err(Error::Resolution(format!(
            "Ulam column sums deviate from 1 by {defect:.3e} (branch inversion failed?)"
        )));
    }
    Ok(tm)
}

fn fourier_rows(map: &CircleMap, n_modes: usize, quad_points: usize) -> Vec<Vec<Complex64>> {
    let q = quad_points;
    let t_vals: Vec<f64> = (0..q).map(|j| map.evaluate(j as f64 / q as f64)).collect();
    let mut rows = Vec::with_capacity(2 * n_modes + 1);
    for ki in 0..=2 * n_modes {
        let k = ki as isize - n_modes as isize;
        let mut buf: Vec<Complex64> = t_vals
            .iter()
            .map(|t| {
                let phase = -2.0 * std::f64::consts::PI * k as f64 * t;
                Complex64::new(phase.cos(), phase.sin())
            })
            .collect();
        fftutil::fft_inverse(&mut buf);
        let row: Vec<Complex64> = (0..=2 * n_modes)
            .map(|mi| {
                let m = mi as isize - n_modes as isize;
                buf[m.rem_euclid(q as isize) as usize] / q as f64
            })
            .collect();
        rows.push(row);
    }
    rows
}

/// Fourier–Galerkin truncation of L_T for a smooth expanding map: entries
/// M[k,m] = ∫ e^{−2πikT(x)} e^{2πimx} dx by Q-point periodic trapezoid
/// (spectrally accurate), one length-Q FFT per row. A doubling test on Q
/// guards against aliasing; the k=0 row is pinned to exact mass conservation.
pub fn assemble_fourier(
    map: &CircleMap,
    n_modes: usize,
    quad_points: usize,
) -> Result<TransferMatrix> {
    if !map.is_smooth() {
        return Err(Error::Unsupported(
            "spectral assembly requires a smooth map (use the Ulam backend)".into(),
        ));
    }
    assert!(n_modes >= 8, "spectral truncation needs N ≥ 8");
    assert!(
        quad_points >= 8 * n_modes,
        "quadrature grid must have at least 8N points"
    );
    let coarse = fourier_rows(map, n_modes, quad_points);
    let fine = fourier_rows(map, n_modes, 2 * quad_points);
    let mut worst = 0.0f64;
    for (rc, rf) in coarse.iter().zip(&fine) {
        for (a, b) in rc.iter().zip(rf) {
            worst = worst.max((a - b).norm());
        }
    }
    if worst > 1e-8 {
        return Err(Error::Resolution(format!(
            "aliasing detected: doubling the quadrature grid moves entries by {worst:.3e}; \
             increase quad_points"
        )));
    }
    let dim = 2 * n_modes + 1;
    let mut m = DMatrix::from_fn(dim, dim, |r, c| fine[r][c]);
    for c in 0..dim {
        m[(n_modes, c)] = if c == n_modes {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        };
    }
    Ok(TransferMatrix {
        repr: Repr::DenseComplex(m),
        kind: OperatorKind::Deterministic,
        meta: OperatorMeta { map: Some(map.name().into()), ..Default::default() },
    })
}

/// Noise operator Q_δ. Ulam: circulant whose column is ρ_δ integrated against
/// the bin-overlap hat functions (a partition of unity, so the column sums to
/// 1 exactly up to rounding). Spectral: the diagonal multiplier ρ̂_δ(k).
/// δ = 0 is the identity in both backends.
pub fn assemble_convolution(
    kernel: &NoiseKernel,
    delta: f64,
    backend: Backend,
) -> Result<TransferMatrix> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidDelta(delta));
    }
    let mut meta = OperatorMeta {
        kernel: Some(kernel.name().into()),
        delta: Some(delta),
        ..Default::default()
    };
    let repr = match backend {
        Backend::Fourier(n_modes) => {
            Repr::DiagComplex(kernel.fourier_multiplier(delta, n_modes)?)
        }
        Backend::Ulam(n) => {
            let mut col = vec![0.0; n];
            if delta == 0.0 {
                col[0] = 1.0;
            } else {
                let dx = 1.0 / n as f64;
                meta.under_resolved = delta < dx / 4.0;
                let scaled = kernel.scaled(delta)?;
                let (slo, shi) = scaled.support();
                let kernel_cuts = scaled.smooth_cuts();
                let d_lo = ((slo - dx) / dx).floor() as i64;
                let d_hi = ((shi + dx) / dx).ceil() as i64;
                for d in d_lo..=d_hi {
                    let center = d as f64 * dx;
                    let (a, b) = ((center - dx).max(slo), (center + dx).min(shi));
                    if b <= a {
                        continue;
                    }
                    // integrand is (piecewise polynomial) × (hat): split at
                    // kernel cuts and the hat's own kink for exact quadrature
                    let mut cuts = vec![a, b, center.clamp(a, b)];
                    cuts.extend(kernel_cuts.iter().copied().filter(|c| *c > a && *c < b));
                    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
                    cuts.dedup_by(|x, y| (*x - *y).abs() <= 1e-15);
                    let mut integral = 0.0;
                    for w in cuts.windows(2) {
                        integral += quadrature::integrate(
                            |u| scaled.eval(u) * (1.0 - (u - center).abs() / dx).max(0.0),
                            w[0],
                            w[1],
                            16,
                        );
                    }
                    col[d.rem_euclid(n as i64) as usize] += integral;
                }
            }
            let mut hat: Vec<Complex64> = col.iter().map(|v| Complex64::new(*v, 0.0)).collect();
            fftutil::fft_forward(&mut hat);
            Repr::Circulant { col, hat }
        }
    };
    let tm = TransferMatrix { repr, kind: OperatorKind::Convolution, meta };
    let defect = tm.markov_defect();
    if defect > 1e-10 {
        return Err(Error::Resolution(format!(
            "convolution operator is not stochastic: defect {defect:.3e}"
        )));
    }
    Ok(tm)
}

/// L_δ = Q_δ · L_T, kept factored so iteration stays cheap.
pub fn compose_noisy(lt: TransferMatrix, q: TransferMatrix) -> Result<TransferMatrix> {
    let compatible = match (&q.repr, &lt.repr) {
        (Repr::Circulant { col, .. }, Repr::SparseReal(m)) => col.len() == m.n,
        (Repr::Circulant { col, .. }, Repr::DenseReal(m)) => col.len() == m.nrows(),
        (Repr::DiagComplex(d), Repr::DenseComplex(m)) => d.len() == m.nrows(),
        _ => false,
    };
    if !compatible {
        return Err(Error::Representation(format!(
            "cannot compose noise ({}) with pushforward ({}): mixed backend or resolution",
            repr_name(&q.repr),
            repr_name(&lt.repr)
        )));
    }
    let meta = OperatorMeta {
        map: lt.meta.map.clone(),
        kernel: q.meta.kernel.clone(),
        delta: q.meta.delta,
        under_resolved: q.meta.under_resolved,
    };
    Ok(TransferMatrix {
        repr: Repr::Composed(Box::new(q), Box::new(lt)),
        kind: OperatorKind::Composed,
        meta,
    })
}

fn repr_name(r: &Repr) -> &'static str {
    match r {
        Repr::SparseReal(_) => "ulam-sparse",
        Repr::DenseReal(_) => "dense-real",
        Repr::Circulant { .. } => "ulam-circulant",
        Repr::DenseComplex(_) => "spectral-dense",
        Repr::DiagComplex(_) => "spectral-diagonal",
        Repr::Composed(..) => "composed",
    }
}
