//! Claim checking and artifact serialization. A report pairs each verified
//! statement with the numbers actually measured, so a failure is traceable
//! without rerunning anything. All floats are written with 17 significant
//! digits — enough to round-trip f64 exactly, which keeps reruns bit-identical.

use crate::error::{Error, Result};
use crate::grid::DensityGrid;
use crate::response::{FitResult, SweepRecord};
use crate::solver::SolveReport;

#[derive(Debug, Clone)]
pub struct ClaimCheck {
    pub name: String,
    /// the inequality being verified, spelled out
    pub statement: String,
    pub measured: String,
    pub passed: bool,
}

impl ClaimCheck {
    pub fn new(name: &str, statement: &str, passed: bool, measured: String) -> ClaimCheck {
        ClaimCheck { name: name.into(), statement: statement.into(), measured, passed }
    }
}

pub fn all_passed(claims: &[ClaimCheck]) -> bool {
    claims.iter().all(|c| c.passed)
}

pub fn render_report(context: &[String], claims: &[ClaimCheck]) -> String {
    let mut out = String::from("zero-noise verification report\n");
    out.push_str("==============================\n");
    for line in context {
        out.push_str(line);
        out.push('\n');
    }
    out.push('\n');
    for c in claims {
        out.push_str(&format!("[{}] {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name));
        out.push_str(&format!("  claim: {}\n", c.statement));
        out.push_str(&format!("  measured: {}\n", c.measured));
    }
    let n_pass = claims.iter().filter(|c| c.passed).count();
    out.push_str(&format!("\nsummary: {n_pass}/{} claims passed\n", claims.len()));
    out
}

/// Claims for a smooth-map sweep: quadratic speed and convergence of the
/// δ²-normalized distance to the explicit coefficient.
pub fn smooth_claims(records: &[SweepRecord], fit_w11: &FitResult) -> Vec<ClaimCheck> {
    let mut claims = vec![ClaimCheck::new(
        "quadratic-speed",
        "fitted exponent p of ||h_delta - h0||_W11 ~ C delta^p lies in [1.85, 2.15] with r^2 >= 0.99",
        (1.85..=2.15).contains(&fit_w11.exponent) && fit_w11.r_squared >= 0.99,
        format!(
            "p = {:.4}, r^2 = {:.6}, points = {}",
            fit_w11.exponent, fit_w11.r_squared, fit_w11.points_used
        ),
    )];
    let residuals: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| !r.flagged)
        .filter_map(|r| r.response_residual.map(|v| (r.delta, v)))
        .collect();
    if residuals.len() >= 2 {
        // deltas are stored decreasing, so the residual sequence must too
        let monotone = residuals.windows(2).all(|w| w[1].1 < w[0].1);
        let ratio = residuals.last().unwrap().1 / residuals[0].1;
        claims.push(ClaimCheck::new(
            "explicit-coefficient",
            "||(h_delta - h0)/delta^2 - (sigma^2/2)(Id - L_T)^{-1} h0''||_W11 decreases monotonically in delta and drops to <= 25% of its largest-delta value",
            monotone && ratio <= 0.25,
            format!(
                "monotone = {monotone}, residual({:.3e}) / residual({:.3e}) = {ratio:.4}",
                residuals.last().unwrap().0,
                residuals[0].0
            ),
        ));
    }
    claims
}

/// Claims for a piecewise-map sweep: order-δ distance, Lipschitz blow-up of
/// order 1/δ, and the lower-bound product that links them.
pub fn piecewise_claims(
    records: &[SweepRecord],
    fit_l1: &FitResult,
    lip_fit: &FitResult,
) -> Vec<ClaimCheck> {
    let lip_q = -lip_fit.exponent;
    let usable: Vec<&SweepRecord> = records.iter().filter(|r| !r.flagged).collect();
    let min_product = usable
        .iter()
        .map(|r| r.dist_l1 * r.lip_hdelta)
        .fold(f64::INFINITY, f64::min);
    vec![
        ClaimCheck::new(
            "linear-speed",
            "fitted exponent p of ||h_delta - h0||_L1 ~ C delta^p lies in [0.85, 1.15]",
            (0.85..=1.15).contains(&fit_l1.exponent),
            format!(
                "p = {:.4}, r^2 = {:.6}, points = {}",
                fit_l1.exponent, fit_l1.r_squared, fit_l1.points_used
            ),
        ),
        ClaimCheck::new(
            "lipschitz-scaling",
            "fitted exponent q of Lip(h_delta) ~ C'/delta^q lies in [0.85, 1.15]",
            (0.85..=1.15).contains(&lip_q),
            format!("q = {lip_q:.4}, r^2 = {:.6}", lip_fit.r_squared),
        ),
        ClaimCheck::new(
            "lower-bound-chain",
            "||h_delta - h0||_L1 * Lip(h_delta) >= 1/9 - 1e-3 for every resolved record (any 1/a-Lipschitz approximant of h0 misses by >= 1/(9a))",
            min_product >= 1.0 / 9.0 - 1e-3,
            format!("min product = {min_product:.4} over {} records", usable.len()),
        ),
    ]
}

/// Claims for a Markov-family run: both Taylor deviations shrink with δ and
/// the smallest-δ deviation is small in absolute terms. When consecutive δ
/// are decades apart the shrink factor must sit in [5, 20] (the clean
/// signature of one extra order of δ).
pub fn abstract_claims(lin: &[(f64, f64)], quad: &[(f64, f64)]) -> Vec<ClaimCheck> {
    let mut claims = Vec::new();
    for (name, statement, devs) in [
        (
            "first-order",
            "||(h_delta - h0)/delta - h1||_1 -> 0, with the smallest-delta deviation <= 1e-3",
            lin,
        ),
        (
            "second-order",
            "||(h_delta - h0 - delta h1)/delta^2 - h2||_1 -> 0, with the smallest-delta deviation <= 1e-3",
            quad,
        ),
    ] {
        let smallest = devs.last().map(|d| d.1).unwrap_or(f64::INFINITY);
        let mut ok = smallest <= 1e-3;
        let mut ratios = String::new();
        for w in devs.windows(2) {
            let (d0, v0) = w[0];
            let (d1, v1) = w[1];
            if v1 >= v0 {
                ok = false;
            }
            let factor = v0 / v1;
            if (d0 / d1 - 10.0).abs() < 1e-9 && !(5.0..=20.0).contains(&factor) {
                ok = false;
            }
            ratios.push_str(&format!(" {factor:.2}x@{d1:.0e}"));
        }
        claims.push(ClaimCheck::new(
            name,
            statement,
            ok,
            format!("smallest deviation = {smallest:.3e}, per-step shrink:{ratios}"),
        ));
    }
    claims
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub const SWEEP_HEADER: &str =
    "delta,dist_l1,dist_w11,response_residual,lip_hdelta,solver_residual,flagged";

pub fn sweep_csv(records: &[SweepRecord]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            fmt(r.delta),
            fmt(r.dist_l1),
            fmt(r.dist_w11),
            r.response_residual.map(fmt).unwrap_or_default(),
            fmt(r.lip_hdelta),
            fmt(r.solver_report.final_residual),
            r.flagged as u8,
        ));
    }
    out
}

/// Inverse of `sweep_csv`, for re-fitting stored sweeps. Iteration counts and
/// normalization defects are not serialized; they come back as zero.
pub fn parse_sweep_csv(src: &str) -> Result<Vec<SweepRecord>> {
    let mut lines = src.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == SWEEP_HEADER => {}
        _ => {
            return Err(Error::Config {
                line: 1,
                message: format!("sweep csv must start with '{SWEEP_HEADER}'"),
            })
        }
    }
    let mut records = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 7 {
            return Err(Error::Config {
                line: idx + 1,
                message: format!("expected 7 cells, got {}", cells.len()),
            });
        }
        let num = |j: usize| -> Result<f64> {
            cells[j].trim().parse().map_err(|_| Error::Config {
                line: idx + 1,
                message: format!("cell {}: '{}' is not a number", j + 1, cells[j]),
            })
        };
        records.push(SweepRecord {
            delta: num(0)?,
            dist_l1: num(1)?,
            dist_w11: num(2)?,
            response_residual: if cells[3].trim().is_empty() { None } else { Some(num(3)?) },
            lip_hdelta: num(4)?,
            solver_report: SolveReport {
                iterations: 0,
                final_residual: num(5)?,
                normalization_defect: 0.0,
            },
            flagged: match cells[6].trim() {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::Config {
                        line: idx + 1,
                        message: format!("flagged must be 0 or 1, got '{other}'"),
                    })
                }
            },
        });
    }
    Ok(records)
}

/// `x,density` table. Bin grids emit one row per bin center; mode grids are
/// sampled on a uniform grid fine enough to resolve every mode.
pub fn density_csv(grid: &DensityGrid) -> String {
    let mut out = String::from("x,density\n");
    match grid {
        DensityGrid::Bins(v) => {
            let n = v.len() as f64;
            for (i, val) in v.iter().enumerate() {
                out.push_str(&format!("{},{}\n", fmt((i as f64 + 0.5) / n), fmt(*val)));
            }
        }
        DensityGrid::Modes(_) => {
            let m = (8 * grid.resolution()).max(256);
            for (i, val) in grid.sample(m).iter().enumerate() {
                out.push_str(&format!("{},{}\n", fmt(i as f64 / m as f64), fmt(*val)));
            }
        }
    }
    out
}

pub fn fits_text(fits: &[(&str, FitResult)]) -> String {
    let mut out = String::new();
    for (field, fit) in fits {
        out.push_str(&format!(
            "field={field} model={:?} exponent={} prefactor={} r_squared={} points={}\n",
            fit.model,
            fmt(fit.exponent),
            fmt(fit.prefactor),
            fmt(fit.r_squared),
            fit.points_used,
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::response::FitModel;

    fn record(delta: f64, residual: Option<f64>, flagged: bool) -> SweepRecord {
        SweepRecord {
            delta,
            dist_l1: 0.31 * delta,
            dist_w11: 2.1 * delta * delta,
            response_residual: residual,
            lip_hdelta: 0.4 / delta,
            solver_report: SolveReport {
                iterations: 17,
                final_residual: 3.2e-14,
                normalization_defect: 0.0,
            },
            flagged,
        }
    }

    fn fit(model: FitModel, exponent: f64, r2: f64) -> FitResult {
        FitResult { model, exponent, prefactor: 1.0, r_squared: r2, points_used: 6 }
    }

    #[test]
    fn sweep_csv_roundtrips_exactly() {
        let records =
            vec![record(0.1, Some(0.02), false), record(0.05, None, true)];
        let text = sweep_csv(&records);
        assert!(text.starts_with(SWEEP_HEADER));
        let back = parse_sweep_csv(&text).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in records.iter().zip(&back) {
            // 17 significant digits round-trip f64 bit-for-bit
            assert_eq!(a.delta.to_bits(), b.delta.to_bits());
            assert_eq!(a.dist_l1.to_bits(), b.dist_l1.to_bits());
            assert_eq!(a.dist_w11.to_bits(), b.dist_w11.to_bits());
            assert_eq!(a.lip_hdelta.to_bits(), b.lip_hdelta.to_bits());
            assert_eq!(a.response_residual.is_some(), b.response_residual.is_some());
            assert_eq!(a.flagged, b.flagged);
        }
        assert_eq!(back[0].response_residual.unwrap().to_bits(), 0.02f64.to_bits());
    }

    #[test]
    fn malformed_sweep_csv_is_rejected_with_line() {
        let cases: &[(&str, usize)] = &[
            ("nope\n", 1),
            (&format!("{SWEEP_HEADER}\n1,2,3\n"), 2),
            (&format!("{SWEEP_HEADER}\n1,2,3,4,5,6,2\n"), 2),
            (&format!("{SWEEP_HEADER}\n1,x,3,,5,6,0\n"), 2),
        ];
        for (src, want) in cases {
            match parse_sweep_csv(src) {
                Err(Error::Config { line, .. }) => assert_eq!(line, *want, "src {src:?}"),
                other => panic!("{src:?} should fail, got {other:?}"),
            }
        }
    }

    #[test]
    fn density_csv_lists_bin_centers() {
        let g = DensityGrid::Bins(vec![1.0, 3.0, 0.5, 0.0]);
        let text = density_csv(&g);
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[0], "x,density");
        let first: Vec<f64> =
            rows[1].split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(first, vec![0.125, 1.0]);
    }

    #[test]
    fn smooth_claims_detect_failures() {
        let good = vec![
            record(0.1, Some(0.4), false),
            record(0.05, Some(0.2), false),
            record(0.025, Some(0.05), false),
        ];
        let claims = smooth_claims(&good, &fit(FitModel::Power, 2.02, 0.999));
        assert_eq!(claims.len(), 2);
        assert!(all_passed(&claims));

        let claims = smooth_claims(&good, &fit(FitModel::Power, 1.5, 0.999));
        assert!(!claims[0].passed && claims[1].passed);

        // residual stalls at 30% of its starting value: coefficient claim fails
        let stalled = vec![
            record(0.1, Some(0.4), false),
            record(0.05, Some(0.2), false),
            record(0.025, Some(0.12), false),
        ];
        let claims = smooth_claims(&stalled, &fit(FitModel::Power, 2.0, 0.999));
        assert!(claims[0].passed && !claims[1].passed);
    }

    #[test]
    fn piecewise_claims_detect_failures() {
        let records = vec![record(0.1, None, false), record(0.05, None, false)];
        // dist * lip = 0.31 * 0.4 = 0.124 > 1/9
        let claims = piecewise_claims(
            &records,
            &fit(FitModel::Power, 0.96, 0.998),
            &fit(FitModel::Power, -0.99, 0.999),
        );
        assert_eq!(claims.len(), 3);
        assert!(all_passed(&claims));

        let mut weak = records.clone();
        for r in weak.iter_mut() {
            r.lip_hdelta *= 0.5; // product 0.062 < 1/9 - 1e-3
        }
        let claims = piecewise_claims(
            &weak,
            &fit(FitModel::Power, 0.96, 0.998),
            &fit(FitModel::Power, -0.99, 0.999),
        );
        assert!(claims[0].passed && claims[1].passed && !claims[2].passed);
    }

    #[test]
    fn abstract_claims_enforce_decade_shrink() {
        let lin = vec![(1e-2, 1e-2), (1e-3, 1.1e-3), (1e-4, 1.1e-4)];
        let quad = vec![(1e-2, 5e-3), (1e-3, 5e-4), (1e-4, 5e-5)];
        assert!(all_passed(&abstract_claims(&lin, &quad)));

        // shrink factor 2 per decade is not one extra order of delta
        let slow = vec![(1e-2, 4e-4), (1e-3, 2e-4), (1e-4, 1e-4)];
        let claims = abstract_claims(&slow, &quad);
        assert!(!claims[0].passed && claims[1].passed);
    }

    #[test]
    fn report_renders_pass_and_fail_lines() {
        let claims = vec![
            ClaimCheck::new("alpha", "a >= b", true, "a = 3, b = 2".into()),
            ClaimCheck::new("beta", "c < d", false, "c = 5, d = 1".into()),
        ];
        let text = render_report(&["map = skew-tent".into()], &claims);
        assert!(text.contains("map = skew-tent"));
        assert!(text.contains("[PASS] alpha"));
        assert!(text.contains("[FAIL] beta"));
        assert!(text.contains("summary: 1/2 claims passed"));
    }
}
