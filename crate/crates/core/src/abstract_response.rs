//! Response theorems verified exactly on finite-state Markov operators.
//!
//! A family L_δ = L₀ + δA + δ²B of column-stochastic matrices has stationary
//! vectors computable by direct linear algebra, so the abstract first- and
//! second-order response formulas
//!   h₁ = (Id − L₀)⁻¹ A h₀,
//!   h₂ = (Id − L₀)⁻¹ [B h₀ + A (Id − L₀)⁻¹ A h₀]
//! can be checked against exact finite differences with no discretization
//! error. Vectors here are probability columns (coordinate sums, ℓ¹ norm) —
//! unlike `DensityGrid`, which carries density normalization.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::io::BufRead;

#[derive(Debug, Clone)]
pub struct MarkovFamily {
    pub l0: DMatrix<f64>,
    /// first-order direction, zero column sums
    pub a: DMatrix<f64>,
    /// second-order direction, zero column sums
    pub b: DMatrix<f64>,
    pub delta_max: f64,
}

fn l1(v: &DVector<f64>) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn col_sum_defect(m: &DMatrix<f64>, want: f64) -> f64 {
    (0..m.ncols())
        .map(|c| (m.column(c).sum() - want).abs())
        .fold(0.0, f64::max)
}

impl MarkovFamily {
    pub fn new(
        l0: DMatrix<f64>,
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        delta_max: f64,
    ) -> Result<MarkovFamily> {
        let fam = MarkovFamily { l0, a, b, delta_max };
        fam.validate()?;
        Ok(fam)
    }

    pub fn dim(&self) -> usize {
        self.l0.nrows()
    }

    pub fn member(&self, delta: f64) -> DMatrix<f64> {
        &self.l0 + &self.a * delta + &self.b * (delta * delta)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.l0.nrows();
        if d < 2 || !self.l0.is_square() || self.a.shape() != (d, d) || self.b.shape() != (d, d) {
            return Err(Error::Family("family matrices must be square and same size".into()));
        }
        if !(self.delta_max > 0.0) {
            return Err(Error::Family("delta_max must be positive".into()));
        }
        if col_sum_defect(&self.l0, 1.0) > 1e-12 {
            return Err(Error::Family("L0 columns must sum to 1".into()));
        }
        if col_sum_defect(&self.a, 0.0) > 1e-12 || col_sum_defect(&self.b, 0.0) > 1e-12 {
            return Err(Error::Family("directions must have zero column sums".into()));
        }
        // positivity across the whole δ range, checked on a grid
        for step in 0..=32 {
            let delta = self.delta_max * step as f64 / 32.0;
            let m = self.member(delta);
            if m.iter().any(|x| *x < -1e-12) {
                return Err(Error::Family(format!(
                    "family leaves the Markov class at δ = {delta}"
                )));
            }
        }
        // leading eigenvalue simple: coordinate-difference probes must decay
        // under iteration (a peripheral eigenvalue or second ergodic class
        // leaves some difference direction invariant in norm)
        for i in 1..d {
            let mut p = DVector::zeros(d);
            p[0] = 1.0;
            p[i] = -1.0;
            let initial = l1(&p);
            for _ in 0..200 {
                p = &self.l0 * p;
            }
            if l1(&p) > 0.99 * initial {
                return Err(Error::Family(
                    "L0 leading eigenvalue is not simple (probe fails to mix)".into(),
                ));
            }
        }
        Ok(())
    }
}

fn stationary_prob(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    let d = m.nrows();
    let k = DMatrix::<f64>::identity(d, d) - m + DMatrix::from_element(d, d, 1.0 / d as f64);
    let rhs = DVector::from_element(d, 1.0 / d as f64);
    k.lu().solve(&rhs).ok_or(Error::SingularSystem)
}

/// (Id − L₀)⁻¹ g on the zero-sum subspace, by the deflated solve.
fn resolvent_zero_sum(l0: &DMatrix<f64>, g: &DVector<f64>) -> Result<DVector<f64>> {
    let s: f64 = g.iter().sum();
    if s.abs() > 1e-9 {
        return Err(Error::MassNotZero(s));
    }
    let d = l0.nrows();
    let k = DMatrix::<f64>::identity(d, d) - l0 + DMatrix::from_element(d, d, 1.0 / d as f64);
    let u = k.lu().solve(g).ok_or(Error::SingularSystem)?;
    let residual = l1(&(&u - l0 * &u - g));
    if residual > 1e-12 * (1.0 + l1(g)) {
        return Err(Error::NonConvergence { iterations: 0, residual });
    }
    Ok(u)
}

/// The stationary vector h₀ and the exact response terms (h₁, h₂) of the
/// family at δ = 0.
pub fn response_terms(fam: &MarkovFamily) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    fam.validate()?;
    let h0 = stationary_prob(&fam.l0)?;
    let h1 = resolvent_zero_sum(&fam.l0, &(&fam.a * &h0))?;
    let h2 = resolvent_zero_sum(&fam.l0, &(&fam.b * &h0 + &fam.a * &h1))?;
    Ok((h0, h1, h2))
}

fn check_deltas(fam: &MarkovFamily, deltas: &[f64]) -> Result<()> {
    for &d in deltas {
        if !(d > 0.0 && d <= fam.delta_max) {
            return Err(Error::InvalidDelta(d));
        }
    }
    Ok(())
}

/// Per-δ deviation ‖(h_δ − h₀)/δ − h₁‖_{ℓ¹}: the linear response theorem
/// makes this O(δ).
pub fn verify_linear_response(fam: &MarkovFamily, deltas: &[f64]) -> Result<Vec<(f64, f64)>> {
    check_deltas(fam, deltas)?;
    let (h0, h1, _) = response_terms(fam)?;
    let mut out = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let h = stationary_prob(&fam.member(delta))?;
        let dev = l1(&((&h - &h0) / delta - &h1));
        out.push((delta, dev));
    }
    Ok(out)
}

/// Per-δ deviation ‖(h_δ − h₀ − δh₁)/δ² − h₂‖_{ℓ¹}: the quadratic response
/// theorem makes this O(δ).
pub fn verify_quadratic_response(fam: &MarkovFamily, deltas: &[f64]) -> Result<Vec<(f64, f64)>> {
    check_deltas(fam, deltas)?;
    let (h0, h1, h2) = response_terms(fam)?;
    let mut out = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let h = stationary_prob(&fam.member(delta))?;
        let dev = l1(&((&h - &h0 - &h1 * delta) / (delta * delta) - &h2));
        out.push((delta, dev));
    }
    Ok(out)
}

/// Bundled 6-state family with dyadic entries: L₀ mixes along a cycle
/// (¼·Id + ½·shift + ¼·shift²), A redistributes mass between neighbours of
/// states 0–3, B redistributes out of states 4 and 5. Not circulant once
/// perturbed, so both response terms are nonzero.
pub fn builtin_family_d6() -> MarkovFamily {
    let d = 6;
    let mut l0 = DMatrix::zeros(d, d);
    for j in 0..d {
        l0[(j, j)] += 0.25;
        l0[((j + 1) % d, j)] += 0.5;
        l0[((j + 2) % d, j)] += 0.25;
    }
    let mut a = DMatrix::zeros(d, d);
    a[(0, 0)] = -0.125;
    a[(1, 0)] = 0.125;
    a[(2, 2)] = -0.25;
    a[(3, 2)] = 0.25;
    let mut b = DMatrix::zeros(d, d);
    b[(0, 4)] = 0.125;
    b[(4, 4)] = -0.25;
    b[(5, 4)] = 0.125;
    b[(1, 5)] = 0.125;
    b[(4, 5)] = 0.125;
    b[(5, 5)] = -0.25;
    MarkovFamily::new(l0, a, b, 0.25).expect("built-in family must satisfy its own invariants")
}

/// Load a family from CSV: 3d data rows of d comma-separated entries —
/// first L₀, then A, then B. Blank lines and `#` comments are skipped.
pub fn family_from_csv<R: BufRead>(reader: R, delta_max: f64) -> Result<MarkovFamily> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            trimmed.split(',').map(|t| t.trim().parse::<f64>()).collect();
        match row {
            Ok(r) => rows.push(r),
            Err(e) => {
                return Err(Error::Family(format!("line {}: {e}", lineno + 1)));
            }
        }
    }
    if rows.len() % 3 != 0 || rows.is_empty() {
        return Err(Error::Family(format!(
            "expected 3·d rows (L0, A, B stacked), got {}",
            rows.len()
        )));
    }
    let d = rows.len() / 3;
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::Family(format!("rows must have {d} columns each")));
    }
    let take = |block: usize| {
        DMatrix::from_fn(d, d, |i, j| rows[block * d + i][j])
    };
    MarkovFamily::new(take(0), take(1), take(2), delta_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn d2_family(with_b: bool) -> MarkovFamily {
        let l0 = DMatrix::from_row_slice(2, 2, &[0.9, 0.2, 0.1, 0.8]);
        let a = DMatrix::from_row_slice(2, 2, &[-0.1, 0.1, 0.1, -0.1]);
        // B = −A²/2 keeps the third-order Taylor coefficient of the exact
        // rational stationary vector small
        let b = if with_b { &a * &a * -0.5 } else { DMatrix::zeros(2, 2) };
        MarkovFamily::new(l0, a, b, 0.5).unwrap()
    }

    /// h_δ of a 2-state chain in closed form: π₀ = M₀₁ / (M₀₁ + M₁₀)
    fn two_state_stationary(m: &DMatrix<f64>) -> DVector<f64> {
        let up = m[(1, 0)];
        let down = m[(0, 1)];
        DVector::from_column_slice(&[down / (up + down), up / (up + down)])
    }

    #[test]
    fn d2_response_terms_match_hand_algebra() {
        // h₀ = (2/3, 1/3); expanding π₀(δ) = (0.2+0.1δ)/(0.3+0.2δ) gives
        // h₁ = (−1/9, 1/9) and, with B = 0, h₂ = (2/27, −2/27)
        let fam = d2_family(false);
        let (h0, h1, h2) = response_terms(&fam).unwrap();
        assert_abs_diff_eq!(h0[0], 2.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(h0[1], 1.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(h1[0], -1.0 / 9.0, epsilon = 1e-14);
        assert_abs_diff_eq!(h1[1], 1.0 / 9.0, epsilon = 1e-14);
        assert_abs_diff_eq!(h2[0], 2.0 / 27.0, epsilon = 1e-13);
        assert_abs_diff_eq!(h2[1], -2.0 / 27.0, epsilon = 1e-13);
    }

    #[test]
    fn d2_stationaries_match_rational_closed_form() {
        let fam = d2_family(true);
        for delta in [0.5, 0.1, 0.01, 1e-3, 1e-4] {
            let m = fam.member(delta);
            let ours = stationary_prob(&m).unwrap();
            let exact = two_state_stationary(&m);
            assert!(l1(&(ours - exact)) <= 1e-14, "δ = {delta}");
        }
    }

    #[test]
    fn d2_linear_deviation_decays_linearly() {
        let fam = d2_family(false);
        let devs = verify_linear_response(&fam, &[0.01, 0.001]).unwrap();
        assert!(devs[0].1 > 0.0);
        assert!(
            devs[0].1 <= 10.0 * devs[1].1 * 1.01,
            "decade of δ must shrink the deviation tenfold: {devs:?}"
        );
    }

    #[test]
    fn d2_quadratic_deviation_is_small_with_b() {
        let fam = d2_family(true);
        let devs = verify_quadratic_response(&fam, &[1e-3]).unwrap();
        // ‖h₀‖₁ = 1 for a probability vector
        assert!(devs[0].1 <= 1e-4, "deviation {:.3e}", devs[0].1);
    }

    #[test]
    fn zero_directions_give_zero_deviation() {
        let l0 = DMatrix::from_row_slice(2, 2, &[0.9, 0.2, 0.1, 0.8]);
        let fam = MarkovFamily::new(l0, DMatrix::zeros(2, 2), DMatrix::zeros(2, 2), 1.0).unwrap();
        for (_, dev) in verify_linear_response(&fam, &[0.5, 0.1, 0.01]).unwrap() {
            assert!(dev <= 1e-11);
        }
        for (_, dev) in verify_quadratic_response(&fam, &[0.5, 0.1]).unwrap() {
            assert!(dev <= 1e-9);
        }
    }

    #[test]
    fn builtin_family_has_nonzero_terms_and_order_separation() {
        let fam = builtin_family_d6();
        let (h0, h1, h2) = response_terms(&fam).unwrap();
        // circulant L₀ mixes to uniform
        for i in 0..6 {
            assert_abs_diff_eq!(h0[i], 1.0 / 6.0, epsilon = 1e-13);
        }
        assert!(l1(&h1) > 1e-3, "perturbation must produce first-order response");
        assert!(l1(&h2) > 1e-3, "family must produce second-order response");
        assert!(h1.iter().sum::<f64>().abs() <= 1e-12);
        assert!(h2.iter().sum::<f64>().abs() <= 1e-12);
        let deltas = [1e-2, 1e-3, 1e-4];
        for devs in [
            verify_linear_response(&fam, &deltas).unwrap(),
            verify_quadratic_response(&fam, &deltas).unwrap(),
        ] {
            for w in devs.windows(2) {
                let ratio = w[1].1 / w[0].1;
                assert!(
                    (0.05..=0.5).contains(&ratio),
                    "decade step must shrink deviation by ~10×: {devs:?}"
                );
            }
            assert!(devs[2].1 <= 1e-3, "δ = 1e−4 deviation: {:.3e}", devs[2].1);
        }
    }

    #[test]
    fn resolvent_identity_holds_on_zero_sum_vectors() {
        let fam = builtin_family_d6();
        let g = DVector::from_column_slice(&[0.3, -0.1, -0.2, 0.25, -0.15, -0.1]);
        let u = resolvent_zero_sum(&fam.l0, &g).unwrap();
        let back = &u - &fam.l0 * &u;
        assert!(l1(&(back - g)) <= 1e-12);
        assert!(u.iter().sum::<f64>().abs() <= 1e-12);
    }

    #[test]
    fn invalid_families_are_rejected() {
        let good_l0 = DMatrix::from_row_slice(2, 2, &[0.9, 0.2, 0.1, 0.8]);
        let zero = DMatrix::zeros(2, 2);
        // bad column sums
        let bad = DMatrix::from_row_slice(2, 2, &[0.9, 0.2, 0.2, 0.8]);
        assert!(MarkovFamily::new(bad, zero.clone(), zero.clone(), 0.5).is_err());
        let bad_dir = DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, 0.0]);
        assert!(MarkovFamily::new(good_l0.clone(), bad_dir, zero.clone(), 0.5).is_err());
        // positivity violated inside the δ range: entry (1,0) = 0.1 − 0.5δ
        let big_a = DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]);
        assert!(MarkovFamily::new(good_l0.clone(), big_a, zero.clone(), 0.5).is_err());
        // period-2 chain: |λ₂| = 1, probes never mix
        let flip = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let err = MarkovFamily::new(flip, zero.clone(), zero.clone(), 0.5).unwrap_err();
        assert!(err.to_string().contains("simple"), "{err}");
        // two ergodic classes
        let split = DMatrix::from_row_slice(4, 4, &[
            0.5, 0.5, 0.0, 0.0, //
            0.5, 0.5, 0.0, 0.0, //
            0.0, 0.0, 0.5, 0.5, //
            0.0, 0.0, 0.5, 0.5,
        ]);
        let zero4 = DMatrix::zeros(4, 4);
        assert!(MarkovFamily::new(split, zero4.clone(), zero4, 0.5).is_err());
    }

    #[test]
    fn csv_roundtrip_preserves_the_family() {
        let fam = builtin_family_d6();
        let mut text = String::from("# 6-state family: L0, then A, then B\n");
        for m in [&fam.l0, &fam.a, &fam.b] {
            for i in 0..6 {
                let row: Vec<String> =
                    (0..6).map(|j| format!("{:.17}", m[(i, j)])).collect();
                text.push_str(&row.join(","));
                text.push('\n');
            }
        }
        let parsed = family_from_csv(text.as_bytes(), fam.delta_max).unwrap();
        assert_eq!(parsed.l0, fam.l0);
        assert_eq!(parsed.a, fam.a);
        assert_eq!(parsed.b, fam.b);

        assert!(family_from_csv("1,2\n3".as_bytes(), 0.5).is_err());
        assert!(family_from_csv("1,x\n2,3\n4,5\n6,7\n8,9\n0,1\n".as_bytes(), 0.5).is_err());
    }
}
