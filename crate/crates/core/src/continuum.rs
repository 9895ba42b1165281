//! Continuum references: Aronsson's singular solution, a finite-difference
//! infinity Laplacian, harmonic-measure experiments on the unit disk and the
//! quadratic comparison checker.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit;
use crate::simulator::trial_rng;
use crate::space::{build_complex, solve_u_eps, EpsilonComplex, Point, Region, SpaceSpec};
use crate::solvers::IterOptions;

/// Angular factor of Aronsson's `G = a(θ)·r^{−1/3}`.
pub fn aronsson_angle(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    let t = t.abs();
    if t > PI / 2.0 {
        return -aronsson_core(t - PI);
    }
    aronsson_core(t)
}

fn aronsson_core(theta: f64) -> f64 {
    let s = (theta / 2.0).tan().abs();
    let s43 = s.powf(4.0 / 3.0);
    let num = theta.cos() * (1.0 - s43).powi(2);
    let den = 1.0 + s43 + s43 * s43;
    (num / den).cbrt()
}

pub fn aronsson_g(r: f64, theta: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!("radius {r} must be positive")));
    }
    Ok(aronsson_angle(theta) * r.powf(-1.0 / 3.0))
}

/// `G` at a Cartesian point.
pub fn aronsson_g_xy(x: f64, y: f64) -> Result<f64> {
    aronsson_g(x.hypot(y), y.atan2(x))
}

/// `a(θ) ≈ 1 − 16^{−1/3}θ^{4/3} − θ²/6` near zero.
pub fn aronsson_expansion(theta: f64) -> f64 {
    let t = theta.abs();
    1.0 - 16f64.powf(-1.0 / 3.0) * t.powf(4.0 / 3.0) - t * t / 6.0
}

/// `ηᵀHη` with `η = ∇u/|∇u|`, from central differences of step `h`.
/// Refuses when the estimated gradient norm is at most `10·h`.
pub fn numeric_delta_inf(u: &dyn Fn(f64, f64) -> f64, x: (f64, f64), h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("step {h}")));
    }
    let (x0, y0) = x;
    let c = u(x0, y0);
    let (e, w) = (u(x0 + h, y0), u(x0 - h, y0));
    let (n, s) = (u(x0, y0 + h), u(x0, y0 - h));
    let gx = (e - w) / (2.0 * h);
    let gy = (n - s) / (2.0 * h);
    let norm = gx.hypot(gy);
    if !(norm > 10.0 * h) {
        return Err(Error::GradientTooSmall(norm));
    }
    let uxx = (e - 2.0 * c + w) / (h * h);
    let uyy = (n - 2.0 * c + s) / (h * h);
    let uxy = (u(x0 + h, y0 + h) - u(x0 + h, y0 - h) - u(x0 - h, y0 + h) + u(x0 - h, y0 - h))
        / (4.0 * h * h);
    let (ex, ey) = (gx / norm, gy / norm);
    Ok(ex * ex * uxx + 2.0 * ex * ey * uxy + ey * ey * uyy)
}

/// Geodesic distance on the unit circle from the point at angle `atan2(y, x)`
/// to the pole `(−1, 0)`.
pub fn angle_from_pole(p: &Point) -> f64 {
    PI - p.y.atan2(p.x).abs()
}

/// Cap data around `(−1, 0)`: 1 on the cap of geodesic radius `δ`, falling
/// linearly to 0 over a further `δ`.
pub fn cap_data(p: &Point, delta: f64) -> f64 {
    let d = (angle_from_pole(p) - delta).max(0.0);
    (1.0 - d / delta).max(0.0)
}

pub fn unit_disk(spacing: f64, eps: f64) -> Result<EpsilonComplex> {
    build_complex(
        &SpaceSpec::EuclideanBall {
            radius: 1.0,
            spacing,
        },
        eps,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HMeasureEntry {
    pub delta: f64,
    pub u0: f64,
    pub residual: f64,
    pub converged: bool,
    pub iterations: usize,
    /// `u0 / (δ^{1/3}·G(1 + 2δ, 0))`, which should stay bounded.
    pub g_ratio: f64,
}

/// `u^ε(0)` on the unit disk for cap data of radius `δ`.
pub fn harmonic_measure_cap(c: &EpsilonComplex, delta: f64, opts: &IterOptions) -> Result<HMeasureEntry> {
    if !(delta > 0.0 && delta <= PI / 4.0) {
        return Err(Error::InvalidParameter(format!("cap radius {delta} not in (0, π/4]")));
    }
    let big_f = c.eval(|p| cap_data(p, delta));
    let rep = solve_u_eps(c, &big_f, &vec![0.0; c.n()], opts)?;
    let u0 = rep.values()[c.nearest(0.0, 0.0)];
    let g_ref = delta.powf(1.0 / 3.0) * aronsson_g(1.0 + 2.0 * delta, 0.0)?;
    Ok(HMeasureEntry {
        delta,
        u0,
        residual: rep.residual_sup,
        converged: rep.converged,
        iterations: rep.iterations,
        g_ratio: u0 / g_ref,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HMeasureResult {
    pub eps: f64,
    pub spacing: f64,
    pub entries: Vec<HMeasureEntry>,
    /// Fitted exponent in `u(0) ≈ C·δ^β`.
    pub beta: f64,
    pub beta_std_err: f64,
    pub r_squared: f64,
}

pub fn harmonic_measure_ladder(
    deltas: &[f64],
    spacing: f64,
    eps: f64,
    opts: &IterOptions,
) -> Result<HMeasureResult> {
    let c = unit_disk(spacing, eps)?;
    let entries = deltas
        .iter()
        .map(|&d| harmonic_measure_cap(&c, d, opts))
        .collect::<Result<Vec<_>>>()?;
    let pts: Vec<(f64, f64)> = entries.iter().map(|e| (e.delta, e.u0)).collect();
    let f = fit::loglog(&pts);
    Ok(HMeasureResult {
        eps,
        spacing: c.spacing,
        entries,
        beta: f.map_or(f64::NAN, |f| f.slope),
        beta_std_err: f.map_or(f64::NAN, |f| f.slope_std_err),
        r_squared: f.map_or(f64::NAN, |f| f.r_squared),
    })
}

/// Subsets of the unit circle, parametrised by `t = angle/2π ∈ [0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CircleSet {
    /// Middle-thirds Cantor set.
    Cantor,
    Full,
}

impl CircleSet {
    /// Geodesic distance from the point at angle `2πt` to the set.
    pub fn distance(&self, t: f64) -> f64 {
        match self {
            CircleSet::Full => 0.0,
            CircleSet::Cantor => 2.0 * PI * cantor_distance(t.rem_euclid(1.0), 48),
        }
    }
}

/// Distance from `t ∈ [0, 1]` to the ternary Cantor set.
fn cantor_distance(t: f64, depth: u32) -> f64 {
    if depth == 0 {
        return 0.0;
    }
    if t <= 1.0 / 3.0 {
        cantor_distance(3.0 * t, depth - 1) / 3.0
    } else if t >= 2.0 / 3.0 {
        cantor_distance(3.0 * t - 2.0, depth - 1) / 3.0
    } else {
        (t - 1.0 / 3.0).min(2.0 / 3.0 - t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PorousEntry {
    pub delta: f64,
    pub u0: f64,
    pub residual: f64,
    pub converged: bool,
    /// Fraction of boundary samples inside `S_δ`.
    pub support_fraction: f64,
}

/// `u^ε(0)` with `F` the indicator of the geodesic `δ`-neighborhood of `set`.
pub fn porous_measure(
    c: &EpsilonComplex,
    set: CircleSet,
    delta: f64,
    opts: &IterOptions,
) -> Result<PorousEntry> {
    let big_f = c.eval(|p| {
        let t = p.y.atan2(p.x) / (2.0 * PI);
        if set.distance(t) <= delta {
            1.0
        } else {
            0.0
        }
    });
    let hits = c.terminals().iter().filter(|&&y| big_f[y] == 1.0).count();
    if hits == 0 {
        return Err(Error::DegenerateSet(format!(
            "S_δ misses every boundary sample at δ = {delta}"
        )));
    }
    let rep = solve_u_eps(c, &big_f, &vec![0.0; c.n()], opts)?;
    Ok(PorousEntry {
        delta,
        u0: rep.values()[c.nearest(0.0, 0.0)],
        residual: rep.residual_sup,
        converged: rep.converged,
        support_fraction: hits as f64 / c.terminals().len() as f64,
    })
}

/// `(1 − 2^{−k})^{log_γ(d_min/d)}`: the plan bound on the value at distance
/// `d ≥ d_min` from the porous set.
pub fn porous_plan_bound(k: u32, gamma: f64, d_min: f64, d: f64) -> Result<f64> {
    if !(0.0 < gamma && gamma < 1.0) || !(d_min > 0.0) || d < d_min {
        return Err(Error::InvalidParameter(format!(
            "need 0 < γ < 1, d_min > 0, d ≥ d_min (γ = {gamma}, d_min = {d_min}, d = {d})"
        )));
    }
    let exponent = (d_min / d).ln() / gamma.ln();
    Ok((1.0 - 0.5f64.powi(k as i32)).powf(exponent))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    StarIncreasing,
    StarDecreasing,
}

/// `φ(x) = a·d(x, z)² + b·d(x, z) + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticDistanceFunction {
    pub center: usize,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub orientation: Orientation,
}

impl QuadraticDistanceFunction {
    pub fn eval(&self, cx: &EpsilonComplex, x: usize) -> f64 {
        let d = cx.dist(self.center, x);
        self.a * d * d + self.b * d + self.c
    }

    /// ⋆-monotonicity on `region`: with `z ∉ V`, `±Q′(d(x, z)) > 0` on `V`;
    /// with `z ∈ V`, `b = 0` and `±a > 0`.
    pub fn is_admissible(&self, cx: &EpsilonComplex, region: &[usize]) -> bool {
        let sign = match self.orientation {
            Orientation::StarIncreasing => 1.0,
            Orientation::StarDecreasing => -1.0,
        };
        if region.contains(&self.center) {
            self.b == 0.0 && sign * self.a > 0.0
        } else {
            region.iter().all(|&x| {
                let d = cx.dist(self.center, x);
                sign * (2.0 * self.a * d + self.b) > 0.0
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSample {
    /// `true` for the from-below clause (checked on `−u`, `−g`).
    pub below: bool,
    pub phi: QuadraticDistanceFunction,
    pub region_size: usize,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub samples: Vec<ComparisonSample>,
    pub skipped: usize,
    pub worst_margin: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Sample `(V, φ)` pairs and measure `min_V (φ − u)` after lifting `φ` to
/// touch `u` from above on `∂V`.
///
/// `V` ranges over balls of radius in `[2ε, r_max]` avoiding the terminal
/// band, `a ≤ inf_V g/2`, and the centre is drawn outside `V` (cone-like
/// `φ`) or, when `a > 0` is allowed, inside `V` with `b = 0`. Odd samples
/// test the from-below clause by negation. Passes when every margin is at
/// least `−tol_factor·ε`.
pub fn quadratic_comparison_check(
    c: &EpsilonComplex,
    u: &[f64],
    g: &[f64],
    samples: usize,
    r_max: f64,
    tol_factor: f64,
    seed: u64,
) -> Result<ComparisonReport> {
    if u.len() != c.n() || g.len() != c.n() {
        return Err(Error::FieldLength {
            expected: c.n(),
            got: u.len().min(g.len()),
        });
    }
    let r_min = 2.0 * c.eps;
    if !(r_max > r_min) {
        return Err(Error::InvalidParameter(format!("r_max {r_max} must exceed 2ε")));
    }
    let interior: Vec<usize> = c.interior().collect();
    let results: Vec<Option<ComparisonSample>> = (0..samples as u64)
        .into_par_iter()
        .map(|s| {
            let mut rng = trial_rng(seed, s);
            let below = s % 2 == 1;
            let sign = if below { -1.0 } else { 1.0 };
            let region = loop {
                let centre = interior[rng.gen_range(0..interior.len())];
                let r = rng.gen_range(r_min..r_max);
                if let Ok(reg) = Region::ball(c, centre, r) {
                    break reg;
                }
            };
            let a_max = region
                .inside
                .iter()
                .map(|&i| sign * g[i])
                .fold(f64::INFINITY, f64::min)
                / 2.0;
            let inside_centre = rng.gen_bool(0.25);
            let phi = if inside_centre {
                if a_max <= 0.0 {
                    return None;
                }
                let z = region.inside[rng.gen_range(0..region.inside.len())];
                QuadraticDistanceFunction {
                    center: z,
                    a: rng.gen_range(0.0..a_max).max(a_max * 1e-3),
                    b: 0.0,
                    c: 0.0,
                    orientation: Orientation::StarIncreasing,
                }
            } else {
                let mut mark = vec![false; c.n()];
                for &i in &region.inside {
                    mark[i] = true;
                }
                let z = loop {
                    let z = rng.gen_range(0..c.n());
                    if !mark[z] {
                        break z;
                    }
                };
                let a = a_max - rng.gen_range(0.0..1.0);
                let (dmin, dmax) = region.inside.iter().fold((f64::INFINITY, 0.0f64), |acc, &i| {
                    let d = c.dist(z, i);
                    (acc.0.min(d), acc.1.max(d))
                });
                let floor = if a >= 0.0 { -2.0 * a * dmin } else { -2.0 * a * dmax };
                QuadraticDistanceFunction {
                    center: z,
                    a,
                    b: floor.max(0.0) + rng.gen_range(0.05..2.0),
                    c: 0.0,
                    orientation: Orientation::StarIncreasing,
                }
            };
            if !phi.is_admissible(c, &region.inside) {
                return None;
            }
            let lift = region
                .boundary
                .iter()
                .map(|&i| sign * u[i] - phi.eval(c, i))
                .fold(f64::NEG_INFINITY, f64::max);
            let phi = QuadraticDistanceFunction { c: lift, ..phi };
            let margin = region
                .inside
                .iter()
                .map(|&i| phi.eval(c, i) - sign * u[i])
                .fold(f64::INFINITY, f64::min);
            Some(ComparisonSample {
                below,
                phi,
                region_size: region.inside.len(),
                margin,
            })
        })
        .collect();
    let skipped = results.iter().filter(|r| r.is_none()).count();
    let samples: Vec<ComparisonSample> = results.into_iter().flatten().collect();
    let worst_margin = samples.iter().map(|s| s.margin).fold(f64::INFINITY, f64::min);
    let tolerance = tol_factor * c.eps;
    Ok(ComparisonReport {
        pass: !samples.is_empty() && worst_margin >= -tolerance,
        samples,
        skipped,
        worst_margin,
        tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::SpaceSpec;

    #[test]
    fn aronsson_values() {
        assert!((aronsson_angle(0.0) - 1.0).abs() < 1e-15);
        assert!(aronsson_angle(PI / 2.0).abs() < 1e-12);
        let t: f64 = 0.1;
        let rem = aronsson_angle(t) - aronsson_expansion(t);
        assert!(rem.abs() < 5.0 * t.powi(3), "{rem}");
    }

    #[test]
    fn aronsson_symmetries() {
        for k in 0..1000 {
            let th = -PI + 2.0 * PI * (k as f64 + 0.5) / 1000.0;
            assert!((aronsson_angle(th + PI) + aronsson_angle(th)).abs() < 1e-12);
            assert!((aronsson_angle(-th) - aronsson_angle(th)).abs() < 1e-12);
        }
        assert!(aronsson_g(0.0, 0.3).is_err());
    }

    #[test]
    fn delta_inf_of_simple_functions() {
        let sq = |x: f64, y: f64| x * x + y * y;
        assert!((numeric_delta_inf(&sq, (0.3, -0.7), 1e-3).unwrap() - 2.0).abs() < 1e-6);
        let cone = |x: f64, y: f64| (x - 0.2).hypot(y + 0.1);
        assert!(numeric_delta_inf(&cone, (1.0, 0.5), 1e-3).unwrap().abs() < 1e-5);
        assert!(matches!(
            numeric_delta_inf(&sq, (0.0, 0.0), 1e-3),
            Err(Error::GradientTooSmall(_))
        ));
    }

    #[test]
    fn quadratic_distance_laplacian_is_2a() {
        let (a, b) = (0.7, 0.4);
        let q = |x: f64, y: f64| {
            let d = (x - 0.1).hypot(y - 0.2);
            a * d * d + b * d
        };
        let got = numeric_delta_inf(&q, (0.9, -0.4), 1e-3).unwrap();
        assert!((got - 2.0 * a).abs() < 1e-4);
    }

    #[test]
    fn cantor_distance_basics() {
        assert_eq!(cantor_distance(0.0, 48), 0.0);
        assert_eq!(cantor_distance(1.0, 48), 0.0);
        assert!((cantor_distance(0.5, 48) - 1.0 / 6.0).abs() < 1e-15);
        assert!((cantor_distance(0.5 / 3.0, 48) - 1.0 / 18.0).abs() < 1e-15);
        assert!(cantor_distance(0.25, 48) < 1e-12);
    }

    #[test]
    fn plan_bound_is_vacuous_at_threshold() {
        assert_eq!(porous_plan_bound(3, 0.1, 0.2, 0.2).unwrap(), 1.0);
        assert!(porous_plan_bound(3, 0.1, 0.2, 2.0).unwrap() < 1.0);
    }

    #[test]
    fn cap_covering_everything_gives_one() {
        let c = unit_disk(0.05, 0.2).unwrap();
        let e = porous_measure(&c, CircleSet::Full, 0.1, &IterOptions::default()).unwrap();
        assert!((e.u0 - 1.0).abs() < 1e-6, "{}", e.u0);
    }

    #[test]
    fn comparison_checker_accepts_linear_segment() {
        let c = build_complex(
            &SpaceSpec::Segment {
                length: 1.0,
                spacing: 0.02,
            },
            0.1,
        )
        .unwrap();
        let u = c.eval(|p| p.x);
        let rep = quadratic_comparison_check(&c, &u, &vec![0.0; c.n()], 100, 0.4, 0.0, 1).unwrap();
        assert!(rep.worst_margin >= -1e-12, "{}", rep.worst_margin);
    }
}
