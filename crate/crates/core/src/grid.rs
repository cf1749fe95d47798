//! Discrete densities on the circle in two representations: bin averages on a
//! uniform grid (Ulam world, BV/L¹ norms) and truncated Fourier coefficients
//! (spectral world, W^{k,1} norms). Conversions preserve mass exactly.

use crate::error::{Error, Result};
use crate::fftutil;
use crate::quadrature;
use num_complex::Complex64;
use std::f64::consts::PI;

/// All discrete norms in one report.
#[derive(Debug, Clone, Copy)]
pub struct Norms {
    pub l1: f64,
    pub w11: f64,
    pub w21: f64,
    pub w31: f64,
    pub bv: f64,
    pub lip: f64,
}

#[derive(Debug, Clone)]
pub enum DensityGrid {
    /// Bin averages over n uniform bins [j/n, (j+1)/n).
    Bins(Vec<f64>),
    /// Fourier coefficients c_k for k = −N..N, stored at index k + N.
    Modes(Vec<Complex64>),
}

impl DensityGrid {
    pub fn constant_bins(n: usize) -> DensityGrid {
        DensityGrid::Bins(vec![1.0; n])
    }

    pub fn constant_modes(n_modes: usize) -> DensityGrid {
        let mut c = vec![Complex64::new(0.0, 0.0); 2 * n_modes + 1];
        c[n_modes] = Complex64::new(1.0, 0.0);
        DensityGrid::Modes(c)
    }

    /// Bin averages of `f`, each bin integrated with a 16-point rule.
    pub fn bins_from_fn<F: Fn(f64) -> f64>(n: usize, f: F) -> DensityGrid {
        let dx = 1.0 / n as f64;
        let values = (0..n)
            .map(|j| {
                let a = j as f64 * dx;
                quadrature::integrate(&f, a, a + dx, 16) / dx
            })
            .collect();
        DensityGrid::Bins(values)
    }

    /// Truncated Fourier coefficients of `f`, computed by FFT over 8(2N+1)
    /// samples (aliasing from unresolved modes decays with the sampling rate).
    pub fn modes_from_fn<F: Fn(f64) -> f64>(n_modes: usize, f: F) -> DensityGrid {
        let m = (8 * (2 * n_modes + 1)).next_power_of_two();
        let mut buf: Vec<Complex64> =
            (0..m).map(|j| Complex64::new(f(j as f64 / m as f64), 0.0)).collect();
        fftutil::fft_forward(&mut buf);
        let mut c = vec![Complex64::new(0.0, 0.0); 2 * n_modes + 1];
        for (i, slot) in c.iter_mut().enumerate() {
            let k = i as isize - n_modes as isize;
            let idx = k.rem_euclid(m as isize) as usize;
            *slot = buf[idx] / m as f64;
        }
        DensityGrid::Modes(c)
    }

    pub fn is_bins(&self) -> bool {
        matches!(self, DensityGrid::Bins(_))
    }

    /// n (bins) or N (modes).
    pub fn resolution(&self) -> usize {
        match self {
            DensityGrid::Bins(v) => v.len(),
            DensityGrid::Modes(c) => (c.len() - 1) / 2,
        }
    }

    pub fn bin_values(&self) -> Option<&[f64]> {
        match self {
            DensityGrid::Bins(v) => Some(v),
            _ => None,
        }
    }

    pub fn mode_coeffs(&self) -> Option<&[Complex64]> {
        match self {
            DensityGrid::Modes(c) => Some(c),
            _ => None,
        }
    }

    /// ∫ density = mean of bin values, or the k=0 coefficient.
    pub fn mass(&self) -> f64 {
        match self {
            DensityGrid::Bins(v) => v.iter().sum::<f64>() / v.len() as f64,
            DensityGrid::Modes(c) => c[(c.len() - 1) / 2].re,
        }
    }

    /// Pointwise evaluation (bin value, or the truncated Fourier sum).
    pub fn eval(&self, x: f64) -> f64 {
        let x = x.rem_euclid(1.0);
        match self {
            DensityGrid::Bins(v) => {
                let j = ((x * v.len() as f64) as usize).min(v.len() - 1);
                v[j]
            }
            DensityGrid::Modes(c) => {
                let n = (c.len() - 1) / 2;
                let mut acc = 0.0;
                for (i, ck) in c.iter().enumerate() {
                    let k = i as isize - n as isize;
                    let phase = 2.0 * PI * k as f64 * x;
                    acc += ck.re * phase.cos() - ck.im * phase.sin();
                }
                acc
            }
        }
    }

    fn zip_with(&self, other: &DensityGrid, f: impl Fn(f64, f64) -> f64) -> Result<DensityGrid> {
        match (self, other) {
            (DensityGrid::Bins(a), DensityGrid::Bins(b)) if a.len() == b.len() => Ok(
                DensityGrid::Bins(a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect()),
            ),
            (DensityGrid::Modes(a), DensityGrid::Modes(b)) if a.len() == b.len() => {
                Ok(DensityGrid::Modes(
                    a.iter()
                        .zip(b)
                        .map(|(x, y)| Complex64::new(f(x.re, y.re), f(x.im, y.im)))
                        .collect(),
                ))
            }
            _ => Err(Error::Representation(
                "grids must share representation and resolution".into(),
            )),
        }
    }

    pub fn sub(&self, other: &DensityGrid) -> Result<DensityGrid> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &DensityGrid) -> Result<DensityGrid> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn scale(&self, s: f64) -> DensityGrid {
        match self {
            DensityGrid::Bins(v) => DensityGrid::Bins(v.iter().map(|x| x * s).collect()),
            DensityGrid::Modes(c) => DensityGrid::Modes(c.iter().map(|x| x * s).collect()),
        }
    }

    /// Spectral derivative: c_k ↦ (2πik)^order c_k. Bins mode: one-sided
    /// cyclic differences divided by Δx, applied `order` times.
    pub fn derivative(&self, order: usize) -> DensityGrid {
        match self {
            DensityGrid::Modes(c) => {
                let n = (c.len() - 1) / 2;
                let d = c
                    .iter()
                    .enumerate()
                    .map(|(i, ck)| {
                        let k = i as isize - n as isize;
                        ck * Complex64::new(0.0, 2.0 * PI * k as f64).powi(order as i32)
                    })
                    .collect();
                DensityGrid::Modes(d)
            }
            DensityGrid::Bins(v) => {
                let n = v.len();
                let mut cur = v.clone();
                for _ in 0..order {
                    let next: Vec<f64> = (0..n)
                        .map(|j| (cur[(j + 1) % n] - cur[j]) * n as f64)
                        .collect();
                    cur = next;
                }
                DensityGrid::Bins(cur)
            }
        }
    }

    /// Values of the density on a uniform m-point grid (modes: padded inverse
    /// FFT, exact for the truncated series when m > 2N).
    pub fn sample(&self, m: usize) -> Vec<f64> {
        match self {
            DensityGrid::Bins(v) => {
                (0..m).map(|j| v[(j * v.len()) / m]).collect()
            }
            DensityGrid::Modes(c) => {
                let n = (c.len() - 1) / 2;
                assert!(m > 2 * n, "sampling grid must resolve all modes");
                let mut buf = vec![Complex64::new(0.0, 0.0); m];
                for (i, ck) in c.iter().enumerate() {
                    let k = i as isize - n as isize;
                    buf[k.rem_euclid(m as isize) as usize] = *ck;
                }
                fftutil::fft_inverse(&mut buf);
                buf.into_iter().map(|z| z.re).collect()
            }
        }
    }

    fn sample_count(&self) -> usize {
        match self {
            DensityGrid::Bins(v) => v.len(),
            DensityGrid::Modes(c) => (8 * c.len()).next_power_of_two().max(4096),
        }
    }

    /// Mean of |values| — the discrete L¹ norm.
    pub fn l1(&self) -> f64 {
        let s = self.sample(self.sample_count());
        s.iter().map(|v| v.abs()).sum::<f64>() / s.len() as f64
    }

    /// Σ|g_{i+1} − g_i| with periodic wrap — the discrete variation.
    pub fn bv(&self) -> f64 {
        let s = self.sample(self.sample_count());
        let n = s.len();
        (0..n).map(|j| (s[(j + 1) % n] - s[j]).abs()).sum()
    }

    /// max|g_{i+1} − g_i| / Δx — the discrete Lipschitz constant.
    pub fn lip(&self) -> f64 {
        let s = self.sample(self.sample_count());
        let n = s.len();
        (0..n)
            .map(|j| (s[(j + 1) % n] - s[j]).abs())
            .fold(0.0f64, f64::max)
            * n as f64
    }

    /// ‖g‖ + ‖g′‖ + … + ‖g^{(k)}‖ in L¹, k ≤ 3.
    pub fn wk1(&self, k: usize) -> f64 {
        assert!(k <= 3, "Sobolev norms computed up to W^{{3,1}}");
        let mut acc = self.l1();
        let mut d = self.clone();
        for _ in 0..k {
            d = d.derivative(1);
            acc += d.l1();
        }
        acc
    }

    pub fn w11(&self) -> f64 {
        self.wk1(1)
    }

    pub fn norms(&self) -> Norms {
        Norms {
            l1: self.l1(),
            w11: self.wk1(1),
            w21: self.wk1(2),
            w31: self.wk1(3),
            bv: self.bv(),
            lip: self.lip(),
        }
    }

    /// Exact bin averages of the truncated Fourier series (or rebinning).
    /// Mass is preserved exactly; the floating-point defect is folded into a
    /// uniform shift.
    pub fn to_bins(&self, n: usize) -> DensityGrid {
        let mass = self.mass();
        let mut values = match self {
            DensityGrid::Bins(v) => {
                if n == v.len() {
                    return self.clone();
                }
                // rebin by exact overlap of old and new bins
                let old_n = v.len();
                let mut out = vec![0.0; n];
                for (j, out_j) in out.iter_mut().enumerate() {
                    let (a, b) = (j as f64 / n as f64, (j + 1) as f64 / n as f64);
                    let mut acc = 0.0;
                    let first = (a * old_n as f64).floor() as usize;
                    let last = ((b * old_n as f64).ceil() as usize).min(old_n) - 1;
                    for i in first..=last.min(old_n - 1) {
                        let (lo, hi) = (i as f64 / old_n as f64, (i + 1) as f64 / old_n as f64);
                        let overlap = (b.min(hi) - a.max(lo)).max(0.0);
                        acc += v[i] * overlap;
                    }
                    *out_j = acc * n as f64;
                }
                out
            }
            DensityGrid::Modes(c) => {
                let n_modes = (c.len() - 1) / 2;
                let mut out = vec![0.0; n];
                for (j, out_j) in out.iter_mut().enumerate() {
                    let mid = (j as f64 + 0.5) / n as f64;
                    let mut acc = 0.0;
                    for (i, ck) in c.iter().enumerate() {
                        let k = i as isize - n_modes as isize;
                        if k == 0 {
                            acc += ck.re;
                            continue;
                        }
                        // ∫_bin e^{2πikx}dx / Δx = e^{2πik·mid} sinc(πk/n)
                        let t = PI * k as f64 / n as f64;
                        let sinc = t.sin() / t;
                        let phase = 2.0 * PI * k as f64 * mid;
                        acc += sinc * (ck.re * phase.cos() - ck.im * phase.sin());
                    }
                    *out_j = acc;
                }
                out
            }
        };
        let defect = mass - values.iter().sum::<f64>() / n as f64;
        for v in &mut values {
            *v += defect;
        }
        DensityGrid::Bins(values)
    }

    /// Fourier coefficients of the piecewise-constant density (bins), or mode
    /// truncation/extension. Mass (c₀) preserved exactly.
    pub fn to_modes(&self, n_modes: usize) -> DensityGrid {
        match self {
            DensityGrid::Modes(c) => {
                let old = (c.len() - 1) / 2;
                let mut out = vec![Complex64::new(0.0, 0.0); 2 * n_modes + 1];
                for (i, slot) in out.iter_mut().enumerate() {
                    let k = i as isize - n_modes as isize;
                    if k.unsigned_abs() <= old {
                        *slot = c[(k + old as isize) as usize];
                    }
                }
                DensityGrid::Modes(out)
            }
            DensityGrid::Bins(v) => {
                let n = v.len();
                let mut out = vec![Complex64::new(0.0, 0.0); 2 * n_modes + 1];
                for (i, slot) in out.iter_mut().enumerate() {
                    let k = i as isize - n_modes as isize;
                    if k == 0 {
                        *slot = Complex64::new(self.mass(), 0.0);
                        continue;
                    }
                    // c_k = Σ_j v_j ∫_bin e^{−2πikx}dx = (sinc(πk/n)/n) Σ_j v_j e^{−2πik·mid_j}
                    let t = PI * k as f64 / n as f64;
                    let sinc = t.sin() / t;
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (j, vj) in v.iter().enumerate() {
                        let phase = -2.0 * PI * k as f64 * (j as f64 + 0.5) / n as f64;
                        acc += vj * Complex64::new(phase.cos(), phase.sin());
                    }
                    *slot = acc * sinc / n as f64;
                }
                DensityGrid::Modes(out)
            }
        }
    }

    /// Rows of (x, value): bin midpoints, or a 1024-point sampling of modes.
    pub fn csv_rows(&self) -> Vec<(f64, f64)> {
        match self {
            DensityGrid::Bins(v) => v
                .iter()
                .enumerate()
                .map(|(j, val)| ((j as f64 + 0.5) / v.len() as f64, *val))
                .collect(),
            DensityGrid::Modes(_) => {
                let m = 1024;
                self.sample(m)
                    .into_iter()
                    .enumerate()
                    .map(|(j, val)| (j as f64 / m as f64, val))
                    .collect()
            }
        }
    }
}
