//! Expanding self-maps of the circle: smooth maps given by a lift expression,
//! and piecewise expanding maps given per-branch. Provides branch inverses
//! (for Ulam assembly and pointwise transfer-operator application), expansion
//! constants λ_{T^k}, and periodic-turning-point detection.

use crate::error::{Error, Result};
use crate::expr::Expr;

/// Distance on the circle ℝ/ℤ.
pub fn circle_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Reduce to [0, 1), guarding the x.rem_euclid(1.0) == 1.0 edge case that
/// tiny negative inputs produce.
pub fn wrap(x: f64) -> f64 {
    let w = x.rem_euclid(1.0);
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// Solve lift(x) = target on [lo, hi] for a strictly monotone lift.
/// Safeguarded Newton: keeps a shrinking bracket, falls back to bisection
/// whenever the Newton step leaves it. Exact in one step for affine branches.
pub(crate) fn solve_monotone(
    lift: &Expr,
    dlift: &Expr,
    lo: f64,
    hi: f64,
    target: f64,
) -> Option<f64> {
    let flo = lift.eval(lo) - target;
    let fhi = lift.eval(hi) - target;
    let increasing = fhi > flo;
    let (vmin, vmax) = if increasing { (flo, fhi) } else { (fhi, flo) };
    if vmin > 1e-9 || vmax < -1e-9 {
        return None; // target outside the branch image
    }
    if flo.abs() <= 1e-13 {
        return Some(lo);
    }
    if fhi.abs() <= 1e-13 {
        return Some(hi);
    }
    let (mut a, mut b) = (lo, hi);
    let mut x = 0.5 * (a + b);
    for _ in 0..200 {
        let fx = lift.eval(x) - target;
        if fx == 0.0 {
            return Some(x);
        }
        if (fx > 0.0) == increasing {
            b = x;
        } else {
            a = x;
        }
        let d = dlift.eval(x);
        let mut next = 0.5 * (a + b);
        if d.abs() > 1e-12 {
            let newton = x - fx / d;
            if newton > a && newton < b {
                next = newton;
            }
        }
        if (next - x).abs() < 1e-16 || (b - a) < 1e-16 {
            return Some(next);
        }
        x = next;
    }
    Some(x)
}

/// Smooth expanding map of degree ≥ 2, defined by a lift expression with
/// T′(x) > 1 everywhere (grid-verified) and symbolic derivatives to order 4.
#[derive(Debug, Clone)]
pub struct SmoothMap {
    name: String,
    lift: Expr,
    derivs: Vec<Expr>, // orders 1..=4
    degree: usize,
    min_derivative: f64,
}

impl SmoothMap {
    pub fn from_expr(name: &str, src: &str) -> Result<SmoothMap> {
        let lift = Expr::parse(src)?;
        let mut derivs = Vec::with_capacity(4);
        let mut d = lift.clone();
        for _ in 0..4 {
            d = d.diff();
            derivs.push(d.clone());
        }
        let degree_f = lift.eval(1.0) - lift.eval(0.0);
        let degree = degree_f.round();
        if (degree_f - degree).abs() > 1e-9 || degree < 2.0 {
            return Err(Error::Map(format!(
                "lift of '{name}' gains {degree_f:.6} per period; need an integer degree ≥ 2"
            )));
        }
        for j in 0..=16 {
            let x = j as f64 / 16.0;
            if (lift.eval(x + 1.0) - lift.eval(x) - degree).abs() > 1e-9 {
                return Err(Error::Map(format!(
                    "lift of '{name}' is not periodic: increment at x={x} differs from degree"
                )));
            }
        }
        let mut min_derivative = f64::INFINITY;
        for j in 0..4096 {
            let x = j as f64 / 4096.0;
            min_derivative = min_derivative.min(derivs[0].eval(x));
        }
        if min_derivative <= 1.0 {
            return Err(Error::Map(format!(
                "'{name}' is not uniformly expanding: min T′ = {min_derivative:.6} ≤ 1"
            )));
        }
        Ok(SmoothMap {
            name: name.into(),
            lift,
            derivs,
            degree: degree as usize,
            min_derivative,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Grid-verified lower bound for T′ (the expansion constant α⁻¹).
    pub fn min_derivative(&self) -> f64 {
        self.min_derivative
    }

    /// k-th derivative of the lift, 1 ≤ k ≤ 4.
    pub fn derivative_expr(&self, order: usize) -> &Expr {
        &self.derivs[order - 1]
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        wrap(self.lift.eval(wrap(x)))
    }
}

#[derive(Debug, Clone)]
struct Branch {
    lo: f64,
    hi: f64,
    lift: Expr,
    dlift: Expr,
    increasing: bool,
    /// lift values at the closed endpoints, in (min, max) order
    range: (f64, f64),
}

/// Piecewise expanding map: breakpoints 0 = d₁ < … < d_n = 1 delimiting
/// monotone C² branches, right-continuous at breakpoints.
#[derive(Debug, Clone)]
pub struct PiecewiseMap {
    name: String,
    breakpoints: Vec<f64>,
    branches: Vec<Branch>,
}

impl PiecewiseMap {
    /// `pieces`: ordered (left endpoint, lift expression); first endpoint must
    /// be 0, each branch extends to the next endpoint (the last to 1).
    pub fn new(name: &str, pieces: &[(f64, &str)]) -> Result<PiecewiseMap> {
        if pieces.is_empty() {
            return Err(Error::Map(format!("map '{name}' has no branches")));
        }
        if pieces[0].0 != 0.0 {
            return Err(Error::Map(format!(
                "first branch of '{name}' must start at 0, starts at {}",
                pieces[0].0
            )));
        }
        let mut breakpoints: Vec<f64> = pieces.iter().map(|p| p.0).collect();
        breakpoints.push(1.0);
        for w in breakpoints.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Map(format!(
                    "breakpoints of '{name}' must be strictly increasing: {} then {}",
                    w[0], w[1]
                )));
            }
        }
        let mut branches = Vec::with_capacity(pieces.len());
        for (i, (lo, src)) in pieces.iter().enumerate() {
            let hi = breakpoints[i + 1];
            let lift = Expr::parse(src)?;
            let dlift = lift.diff();
            // monotone, derivative bounded away from 0 on the closed branch
            let mut sign = 0.0f64;
            for j in 0..=512 {
                let x = lo + (hi - lo) * j as f64 / 512.0;
                let d = dlift.eval(x);
                if d.abs() < 1e-6 {
                    return Err(Error::Map(format!(
                        "branch {i} of '{name}' has |T′| < 1e-6 at x = {x:.6}; branches must be strictly monotone"
                    )));
                }
                if sign == 0.0 {
                    sign = d.signum();
                } else if d.signum() != sign {
                    return Err(Error::Map(format!(
                        "branch {i} of '{name}' changes monotonicity near x = {x:.6}"
                    )));
                }
            }
            let (vlo, vhi) = (lift.eval(*lo), lift.eval(hi));
            branches.push(Branch {
                lo: *lo,
                hi,
                lift,
                dlift,
                increasing: sign > 0.0,
                range: (vlo.min(vhi), vlo.max(vhi)),
            });
        }
        let map = PiecewiseMap { name: name.into(), breakpoints, branches };
        // piecewise expanding: λ_{T^k} > 1 for some k ≤ 4
        let expanding = (1..=4).any(|k| map.expansion_constant(k).0 > 1.0);
        if !expanding {
            return Err(Error::Map(format!(
                "'{name}' is not eventually expanding: λ(T^k) ≤ 1 for k ≤ 4"
            )));
        }
        Ok(map)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    /// Image interval (min, max) of each branch's lift over its closed domain.
    pub fn branch_ranges(&self) -> Vec<(f64, f64)> {
        self.branches.iter().map(|b| b.range).collect()
    }

    fn branch_at(&self, x: f64) -> &Branch {
        // right-continuous: branch whose half-open domain [lo, hi) contains x
        self.branches
            .iter()
            .rev()
            .find(|b| x >= b.lo)
            .unwrap_or(&self.branches[0])
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        let x = wrap(x);
        wrap(self.branch_at(x).lift.eval(x))
    }

    /// Signed derivative at x; None within 1e−12 of a breakpoint (turning point).
    pub fn derivative(&self, x: f64) -> Option<f64> {
        let x = wrap(x);
        if self
            .breakpoints
            .iter()
            .any(|b| circle_dist(x, wrap(*b)) < 1e-12)
        {
            return None;
        }
        Some(self.branch_at(x).dlift.eval(x))
    }

    fn expansion_constant(&self, k: usize) -> (f64, usize) {
        expansion_on_grid(k, |x| self.derivative(x), |x| self.evaluate(x))
    }

    /// Possible next orbit points from x: generically one value; at a
    /// breakpoint both the right-branch value and the left-branch limit.
    fn continuations(&self, x: f64) -> Vec<f64> {
        let x = wrap(x);
        let mut out = vec![wrap(self.branch_at(x).lift.eval(x))];
        if let Some(b) = self
            .breakpoints
            .iter()
            .map(|b| wrap(*b))
            .find(|b| circle_dist(x, *b) < 1e-12)
        {
            // left-limit branch: the one ending at b (at 1.0 when b = 0)
            let end = if b == 0.0 { 1.0 } else { b };
            if let Some(left) = self.branches.iter().find(|br| (br.hi - end).abs() < 1e-12) {
                let v = wrap(left.lift.eval(end));
                if circle_dist(v, out[0]) > 1e-12 {
                    out.push(v);
                }
            }
        }
        out
    }
}

fn expansion_on_grid<D, E>(k: usize, derivative: D, evaluate: E) -> (f64, usize)
where
    D: Fn(f64) -> Option<f64>,
    E: Fn(f64) -> f64,
{
    assert!((1..=8).contains(&k), "expansion constant order must be in 1..=8");
    let n = 8192;
    let mut lambda = f64::INFINITY;
    let mut skipped = 0usize;
    'grid: for j in 0..n {
        let mut x = (j as f64 + 0.5) / n as f64;
        let mut prod = 1.0;
        for _ in 0..k {
            match derivative(x) {
                Some(d) => prod *= d.abs(),
                None => {
                    skipped += 1;
                    continue 'grid;
                }
            }
            x = evaluate(x);
        }
        lambda = lambda.min(prod);
    }
    (lambda, skipped)
}

/// Preimage set of a point with branch-derivative magnitudes.
#[derive(Debug, Clone)]
pub struct Preimages {
    /// (x, |T′(x)|), sorted by x
    pub points: Vec<(f64, f64)>,
    /// y landed on a branch-image endpoint; adjacent branches merged
    pub at_branch_boundary: bool,
}

/// A monotone branch view for operator assembly: domain [lo, hi], unwrapped
/// lift, and its derivative.
pub struct BranchView<'a> {
    pub lo: f64,
    pub hi: f64,
    pub lift: &'a Expr,
    pub dlift: &'a Expr,
    pub increasing: bool,
}

#[derive(Debug, Clone)]
pub enum CircleMap {
    Smooth(SmoothMap),
    Piecewise(PiecewiseMap),
}

impl CircleMap {
    /// T(x) = 2x mod 1.
    pub fn doubling() -> CircleMap {
        CircleMap::Smooth(SmoothMap::from_expr("doubling", "2*x").unwrap())
    }

    /// T(x) = 2x + 0.1 sin(2πx) mod 1 — the smooth test map
    /// (expanding: T′ ≥ 2 − 0.2π > 1).
    pub fn perturbed_doubling() -> CircleMap {
        CircleMap::Smooth(
            SmoothMap::from_expr("perturbed-doubling", "2*x + 0.1*sin(2*pi*x)").unwrap(),
        )
    }

    /// The skew tent map: x + 1/2 on [0, 1/2), 2(1 − x) on [1/2, 1).
    /// Piecewise linear, eventually expanding (λ_{T²} = 2), with periodic
    /// turning points {0, 1/2} and a discontinuous invariant density.
    pub fn skew_tent() -> CircleMap {
        CircleMap::Piecewise(
            PiecewiseMap::new("skew-tent", &[(0.0, "x + 1/2"), (0.5, "2*(1 - x)")]).unwrap(),
        )
    }

    pub fn by_name(name: &str) -> Result<CircleMap> {
        match name {
            "doubling" => Ok(Self::doubling()),
            "perturbed-doubling" => Ok(Self::perturbed_doubling()),
            "skew-tent" => Ok(Self::skew_tent()),
            other => Err(Error::Map(format!(
                "unknown map '{other}' (built-ins: doubling, perturbed-doubling, skew-tent)"
            ))),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            CircleMap::Smooth(m) => &m.name,
            CircleMap::Piecewise(m) => &m.name,
        }
    }

    pub fn is_smooth(&self) -> bool {
        matches!(self, CircleMap::Smooth(_))
    }

    pub fn as_smooth(&self) -> Option<&SmoothMap> {
        match self {
            CircleMap::Smooth(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_piecewise(&self) -> Option<&PiecewiseMap> {
        match self {
            CircleMap::Piecewise(m) => Some(m),
            _ => None,
        }
    }

    /// Number of monotone branches (= topological degree for smooth maps).
    pub fn branch_count(&self) -> usize {
        match self {
            CircleMap::Smooth(m) => m.degree,
            CircleMap::Piecewise(m) => m.branch_count(),
        }
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        match self {
            CircleMap::Smooth(m) => m.evaluate(x),
            CircleMap::Piecewise(m) => m.evaluate(x),
        }
    }

    /// Monotone branch decomposition of the lift (smooth maps: one branch on [0,1]).
    pub fn branch_views(&self) -> Vec<BranchView<'_>> {
        match self {
            CircleMap::Smooth(m) => vec![BranchView {
                lo: 0.0,
                hi: 1.0,
                lift: &m.lift,
                dlift: &m.derivs[0],
                increasing: true,
            }],
            CircleMap::Piecewise(m) => m
                .branches
                .iter()
                .map(|b| BranchView {
                    lo: b.lo,
                    hi: b.hi,
                    lift: &b.lift,
                    dlift: &b.dlift,
                    increasing: b.increasing,
                })
                .collect(),
        }
    }

    /// All solutions of T(x) = y with branch derivative magnitudes.
    pub fn branch_preimages(&self, y: f64) -> Preimages {
        let y = wrap(y);
        // (x, |T′|, lands on excluded branch end, y is a branch-image endpoint)
        let mut raw: Vec<(f64, f64, bool, bool)> = Vec::new();
        let views = self.branch_views();
        let mut flag = false;
        for v in &views {
            let (vlo, vhi) = (v.lift.eval(v.lo), v.lift.eval(v.hi));
            let (rmin, rmax) = (vlo.min(vhi), vlo.max(vhi));
            let m_lo = (rmin - y - 1e-12).ceil() as i64;
            let m_hi = (rmax - y + 1e-12).floor() as i64;
            for m in m_lo..=m_hi {
                let target = (y + m as f64).clamp(rmin, rmax);
                if let Some(x) = solve_monotone(v.lift, v.dlift, v.lo, v.hi, target) {
                    let at_hi = (x - v.hi).abs() < 1e-10;
                    let at_edge =
                        (target - rmin).abs() < 1e-12 || (target - rmax).abs() < 1e-12;
                    flag |= at_hi || at_edge;
                    // a solution at the excluded right endpoint belongs to the
                    // next branch; keep it only if the map attains y there
                    if at_hi && circle_dist(self.evaluate(wrap(x)), y) > 1e-9 {
                        continue;
                    }
                    raw.push((wrap(x), v.dlift.eval(x).abs(), at_hi, at_edge));
                }
            }
        }
        // interior solutions first within each cluster, so dedup keeps the
        // derivative of the branch that owns the point
        raw.sort_by(|a, b| (a.0, a.2).partial_cmp(&(b.0, b.2)).unwrap());
        let mut points: Vec<(f64, f64)> = Vec::new();
        for (x, d, _, _) in raw {
            if let Some(last) = points.last() {
                if circle_dist(last.0, x) < 1e-9 {
                    continue; // same circle point reached from adjacent branches
                }
            }
            points.push((x, d));
        }
        // wrap-around duplicate: x near 1 equal to x near 0
        if points.len() > 1 && circle_dist(points[0].0, points.last().unwrap().0) < 1e-9 {
            points.pop();
        }
        Preimages { points, at_branch_boundary: flag }
    }

    /// inf |(T^k)′| over an 8192-point midpoint grid (chain rule along orbits);
    /// returns the constant and how many grid orbits were skipped for hitting
    /// a point of non-differentiability.
    pub fn expansion_constant(&self, k: usize) -> (f64, usize) {
        match self {
            CircleMap::Smooth(m) => {
                expansion_on_grid(k, |x| Some(m.derivs[0].eval(wrap(x))), |x| m.evaluate(x))
            }
            CircleMap::Piecewise(m) => m.expansion_constant(k),
        }
    }

    /// Searches for a periodic orbit of a turning point (breakpoint) up to
    /// `max_period`; returns the witness orbit [p, T(p), …, ≈p] if found.
    /// Smooth maps have no turning points.
    pub fn has_periodic_turning_point(&self, max_period: usize) -> (bool, Option<Vec<f64>>) {
        assert!(max_period <= 32, "turning-point search capped at period 32");
        let m = match self {
            CircleMap::Smooth(_) => return (false, None),
            CircleMap::Piecewise(m) => m,
        };
        // interior breakpoints first (more informative witnesses), then 0 ≡ 1
        let mut tps: Vec<f64> = m.breakpoints[1..m.breakpoints.len() - 1].to_vec();
        tps.push(0.0);
        for &tp in &tps {
            let mut frontier: Vec<Vec<f64>> = vec![vec![tp]];
            for _ in 0..max_period {
                let mut next: Vec<Vec<f64>> = Vec::new();
                for path in &frontier {
                    let x = *path.last().unwrap();
                    for v in m.continuations(x) {
                        if circle_dist(v, tp) < 1e-9 {
                            let mut orbit = path.clone();
                            orbit.push(tp);
                            return (true, Some(orbit));
                        }
                        let mut p = path.clone();
                        p.push(v);
                        next.push(p);
                    }
                }
                next.truncate(64); // breakpoint-hit branching is rare; cap defensively
                frontier = next;
            }
        }
        (false, None)
    }
}
