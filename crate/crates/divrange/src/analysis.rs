//! Differential and asymptotic analysis of a divergence pair on the
//! parameter triangle: Jacobian determinants, singular loci, tail ratios of
//! `g/f`, recession-ray detection, the 4-atom achievability constructor, and
//! Monte Carlo membership verification.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::divergence::{
    block_mixture, divergence, divergence_pair, two_point_pair, DiscreteDistribution,
    DivergenceError,
    DivergencePoint, TrianglePoint,
};
use crate::generators::Generator;
use crate::jointrange::{Containment, ConvexRegion, PointCloud, RayDir};

/// A tail ratio larger than this is declared divergent to infinity.
const RATIO_BLOWUP: f64 = 1e12;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("point ({0}, {1}) is not strictly interior to the triangle")]
    BoundaryPoint(f64, f64),
    #[error("finite-difference step must be positive")]
    StepNotPositive,
    #[error("non-finite divergence in the difference stencil at ({0}, {1})")]
    NonFiniteStencil(f64, f64),
    #[error("singular-locus grid size {0} too small (need >= 8)")]
    GridTooSmall(usize),
    #[error("tail of g/f is indeterminate (too few valid samples)")]
    IndeterminateRatio,
    #[error("second derivative estimate at t = 1 is not positive: {0}")]
    SecondDerivativeNotPositive(f64),
    #[error("target is not inside the computed region")]
    TargetNotInside,
    #[error("residual {best} not reduced below tolerance")]
    ResidualNotMet { best: f64 },
    #[error("dimension {0} too small (need >= 2)")]
    DimensionTooSmall(usize),
    #[error(transparent)]
    Divergence(#[from] DivergenceError),
}

/// Tail estimates of `g(t)/f(t)` at both ends of the domain, plus the
/// infinity flags of the stored generator limits.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LimitRatios {
    #[serde(serialize_with = "crate::cli::ser_ext")]
    pub beta0_at_zero: f64,
    #[serde(serialize_with = "crate::cli::ser_ext")]
    pub beta0_at_inf: f64,
    #[serde(serialize_with = "crate::cli::ser_ext")]
    pub gamma0_at_zero: f64,
    #[serde(serialize_with = "crate::cli::ser_ext")]
    pub gamma0_at_inf: f64,
    pub f_zero_infinite: bool,
    pub f_conj_infinite: bool,
    pub g_zero_infinite: bool,
    pub g_conj_infinite: bool,
}

/// liminf/limsup estimates of g/f along a geometric sequence toward one end.
///
/// The last-ten tail yields the running min/max; a strictly growing tail
/// whose increments do not decay (or that has already passed the blow-up
/// threshold) is declared divergent. A logarithmically divergent ratio never
/// crosses any fixed threshold on a finite sample, so the increment test is
/// what detects it.
fn tail_estimates(f: &Generator, g: &Generator, toward_zero: bool) -> Result<(f64, f64), AnalysisError> {
    let mut samples = Vec::with_capacity(60);
    for k in 1..=60 {
        let t = if toward_zero {
            2f64.powi(-k)
        } else {
            2f64.powi(k)
        };
        let fv = f.eval(t);
        let gv = g.eval(t);
        if fv == 0.0 || (fv.is_infinite() && gv.is_infinite()) {
            continue;
        }
        samples.push(if gv.is_infinite() {
            f64::INFINITY
        } else if fv.is_infinite() {
            0.0
        } else {
            gv / fv
        });
    }
    if samples.len() < 10 {
        return Err(AnalysisError::IndeterminateRatio);
    }
    let tail = &samples[samples.len() - 10..];
    if tail.iter().any(|r| r.is_infinite()) {
        return Ok((f64::INFINITY, f64::INFINITY));
    }
    let first_step = tail[1] - tail[0];
    let last_step = tail[9] - tail[8];
    if tail.windows(2).all(|w| w[1] > w[0]) {
        // sustained growth (increments not dying off) catches logarithmic
        // divergence that a bare threshold would never reach
        let blown = tail[9] > RATIO_BLOWUP;
        let sustained = first_step > 1e-9 * f64::max(1.0, tail[9].abs())
            && last_step >= 0.5 * first_step;
        if blown || sustained {
            return Ok((f64::INFINITY, f64::INFINITY));
        }
    }
    let lo = tail.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if tail.windows(2).all(|w| w[1] < w[0]) && lo > 0.0 {
        // mirrored rule for slow decay to zero: a sustained strictly
        // decreasing tail is read as liminf 0
        let sustained = -first_step > 1e-9 * f64::max(1.0, tail[0].abs())
            && -last_step >= 0.4 * -first_step;
        if tail[9] < 1.0 / RATIO_BLOWUP || sustained {
            return Ok((0.0, hi));
        }
    }
    Ok((lo, hi))
}

/// Estimate the four limit quantities of `g/f` and record which stored
/// generator limits are infinite.
pub fn limit_ratios(f: &Generator, g: &Generator) -> Result<LimitRatios, AnalysisError> {
    let (b0, g0) = tail_estimates(f, g, true)?;
    let (bi, gi) = tail_estimates(f, g, false)?;
    Ok(LimitRatios {
        beta0_at_zero: b0,
        beta0_at_inf: bi,
        gamma0_at_zero: g0,
        gamma0_at_inf: gi,
        f_zero_infinite: f.value_at_zero().is_infinite(),
        f_conj_infinite: f.conjugate_at_zero().is_infinite(),
        g_zero_infinite: g.value_at_zero().is_infinite(),
        g_conj_infinite: g.conjugate_at_zero().is_infinite(),
    })
}

/// Recession directions of the joint range, one decision per domain end.
///
/// If exactly one of the two divergences blows up at an end, the matching
/// axis direction is unbounded. If both blow up, the tail slope bounds of
/// g/f at that end span the unbounded directions. Attachment is
/// conservative: an indeterminate tail attaches nothing.
pub fn recession_rays(f: &Generator, g: &Generator) -> Vec<RayDir> {
    let lr = limit_ratios(f, g);
    let mut rays: Vec<RayDir> = Vec::new();
    let mut push = |d: RayDir| {
        if !rays.iter().any(|r| r.approx_eq(&d)) {
            rays.push(d);
        }
    };
    let ends = [
        (
            f.value_at_zero().is_infinite(),
            g.value_at_zero().is_infinite(),
            lr.as_ref().map(|l| (l.beta0_at_zero, l.gamma0_at_zero)).ok(),
        ),
        (
            f.conjugate_at_zero().is_infinite(),
            g.conjugate_at_zero().is_infinite(),
            lr.as_ref().map(|l| (l.beta0_at_inf, l.gamma0_at_inf)).ok(),
        ),
    ];
    for (f_inf, g_inf, slopes) in ends {
        match (f_inf, g_inf) {
            (true, false) => push(RayDir { dx: 1.0, dy: 0.0 }),
            (false, true) => push(RayDir { dx: 0.0, dy: 1.0 }),
            (true, true) => {
                if let Some((lo, hi)) = slopes {
                    push(RayDir::from_slope(lo));
                    push(RayDir::from_slope(hi));
                }
            }
            (false, false) => {}
        }
    }
    rays
}

fn partials_closed(f: &Generator, p: f64, q: f64) -> Option<(f64, f64)> {
    // D(p, q) = (1-q) f(u) + q f(v), u = (1-p)/(1-q), v = p/q
    let u = (1.0 - p) / (1.0 - q);
    let v = p / q;
    let fu = f.eval(u);
    let fv = f.eval(v);
    let du = f.deriv1(u)?;
    let dv = f.deriv1(v)?;
    let dp = dv - du;
    let dq = -fu + u * du + fv - v * dv;
    Some((dp, dq))
}

fn two_point_value(
    f: &Generator,
    g: &Generator,
    p: f64,
    q: f64,
) -> Result<DivergencePoint, AnalysisError> {
    let t = TrianglePoint::new(p, q).map_err(AnalysisError::Divergence)?;
    two_point_pair(f, g, t).map_err(AnalysisError::Divergence)
}

/// Determinant of the 2x2 matrix of partial derivatives of `(D_f, D_g)` with
/// respect to `(p, q)` at an interior triangle point. Uses closed-form
/// derivative rules when both generators carry them, otherwise central
/// differences with the step shrunk near the triangle boundary.
pub fn jacobian_det(
    f: &Generator,
    g: &Generator,
    t: TrianglePoint,
    h: f64,
) -> Result<f64, AnalysisError> {
    let (p, q) = (t.p(), t.q());
    if !(p > 0.0 && p < q && q < 1.0) {
        return Err(AnalysisError::BoundaryPoint(p, q));
    }
    if !(h > 0.0) {
        return Err(AnalysisError::StepNotPositive);
    }
    if f.has_deriv1() && g.has_deriv1() {
        if let (Some((fp, fq)), Some((gp, gq))) =
            (partials_closed(f, p, q), partials_closed(g, p, q))
        {
            return Ok(fp * gq - gp * fq);
        }
    }
    let hp = h.min(0.5 * p.min(q - p));
    let hq = h.min(0.5 * (q - p).min(1.0 - q));
    let stencil = [
        two_point_value(f, g, p + hp, q)?,
        two_point_value(f, g, p - hp, q)?,
        two_point_value(f, g, p, q + hq)?,
        two_point_value(f, g, p, q - hq)?,
    ];
    if stencil.iter().any(|v| !v.is_finite()) {
        return Err(AnalysisError::NonFiniteStencil(p, q));
    }
    let fp = (stencil[0].x - stencil[1].x) / (2.0 * hp);
    let gp = (stencil[0].y - stencil[1].y) / (2.0 * hp);
    let fq = (stencil[2].x - stencil[3].x) / (2.0 * hq);
    let gq = (stencil[2].y - stencil[3].y) / (2.0 * hq);
    Ok(fp * gq - gp * fq)
}

/// A refined Jacobian zero, tagged with the connected grid component the
/// sign change belongs to.
#[derive(Debug, Clone, Copy)]
pub struct SingularPoint {
    pub point: TrianglePoint,
    pub component: usize,
}

const JACOBIAN_STEP: f64 = 1e-6;

/// Locate interior zeros of the Jacobian determinant: evaluate on an interior
/// grid, bisect every sign-change edge down to `tol` interval width, and
/// group the refined points by connected grid component. An empty result is
/// a valid outcome.
pub fn singular_locus(
    f: &Generator,
    g: &Generator,
    n: usize,
    tol: f64,
) -> Result<Vec<SingularPoint>, AnalysisError> {
    if n < 8 {
        return Err(AnalysisError::GridTooSmall(n));
    }
    let coord = |i: usize| i as f64 / (n + 1) as f64;
    let det_at = |p: f64, q: f64| -> Option<f64> {
        let t = TrianglePoint::new(p, q).ok()?;
        jacobian_det(f, g, t, JACOBIAN_STEP).ok()
    };
    // node values on the strict-interior grid
    let mut det = vec![vec![None; n + 1]; n + 1];
    for i in 1..=n {
        for j in (i + 1)..=n {
            det[i][j] = det_at(coord(i), coord(j));
        }
    }
    // union-find over grid nodes, joined across sign-change edges
    let idx = |i: usize, j: usize| i * (n + 1) + j;
    let mut parent: Vec<usize> = (0..(n + 1) * (n + 1)).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let union = |parent: &mut Vec<usize>, a: usize, b: usize| {
        let (ra, rb) = (find(parent, a), find(parent, b));
        if ra != rb {
            parent[ra] = rb;
        }
    };

    struct Edge {
        node: (usize, usize),
        horizontal: bool, // varying p
    }
    let mut edges: Vec<Edge> = Vec::new();
    let mut involved = vec![vec![false; n + 1]; n + 1];
    for i in 1..=n {
        for j in (i + 1)..=n {
            let here = match det[i][j] {
                Some(v) => v,
                None => continue,
            };
            if i + 1 < j {
                if let Some(right) = det[i + 1][j] {
                    if here * right < 0.0 {
                        union(&mut parent, idx(i, j), idx(i + 1, j));
                        involved[i][j] = true;
                        involved[i + 1][j] = true;
                        edges.push(Edge {
                            node: (i, j),
                            horizontal: true,
                        });
                    }
                }
            }
            if j + 1 <= n {
                if let Some(up) = det[i][j + 1] {
                    if here * up < 0.0 {
                        union(&mut parent, idx(i, j), idx(i, j + 1));
                        involved[i][j] = true;
                        involved[i][j + 1] = true;
                        edges.push(Edge {
                            node: (i, j),
                            horizontal: false,
                        });
                    }
                }
            }
        }
    }
    // join sign-change nodes across the 8-neighborhood so one curve crossing
    // many grid columns collapses into a single component
    for i in 1..=n {
        for j in (i + 1)..=n {
            if !involved[i][j] {
                continue;
            }
            for (di, dj) in [(1i64, 0i64), (0, 1), (1, 1), (1, -1)] {
                let (ni, nj) = ((i as i64 + di) as usize, (j as i64 + dj) as usize);
                if ni <= n && nj <= n && involved.get(ni).map_or(false, |r| r[nj]) {
                    union(&mut parent, idx(i, j), idx(ni, nj));
                }
            }
        }
    }
    let mut components: Vec<usize> = Vec::new();
    let mut out = Vec::new();
    for e in &edges {
        let (i, j) = e.node;
        let refined = if e.horizontal {
            let (mut a, mut b) = (coord(i), coord(i + 1));
            let q = coord(j);
            let mut fa = det_at(a, q).unwrap();
            while b - a > tol {
                let m = 0.5 * (a + b);
                let fm = match det_at(m, q) {
                    Some(v) => v,
                    None => break,
                };
                if fm == 0.0 {
                    a = m;
                    b = m;
                    break;
                }
                if fa * fm < 0.0 {
                    b = m;
                } else {
                    a = m;
                    fa = fm;
                }
            }
            TrianglePoint::new(0.5 * (a + b), coord(j)).unwrap()
        } else {
            let (mut a, mut b) = (coord(j), coord(j + 1));
            let p = coord(i);
            let mut fa = det_at(p, a).unwrap();
            while b - a > tol {
                let m = 0.5 * (a + b);
                let fm = match det_at(p, m) {
                    Some(v) => v,
                    None => break,
                };
                if fm == 0.0 {
                    a = m;
                    b = m;
                    break;
                }
                if fa * fm < 0.0 {
                    b = m;
                } else {
                    a = m;
                    fa = fm;
                }
            }
            TrianglePoint::new(coord(i), 0.5 * (a + b)).unwrap()
        };
        let root = find(&mut parent, idx(i, j));
        let component = match components.iter().position(|&c| c == root) {
            Some(k) => k,
            None => {
                components.push(root);
                components.len() - 1
            }
        };
        out.push(SingularPoint {
            point: refined,
            component,
        });
    }
    Ok(out)
}

fn second_difference(f: &Generator, t: f64, h: f64) -> f64 {
    (f.eval(t + h) - 2.0 * f.eval(t) + f.eval(t - h)) / (h * h)
}

/// Existence check for a global bound `D_g >= beta D_f`: when the tail
/// liminf of g/f is positive at both ends and both generators curve upward
/// at 1, a positive multiplier exists; the returned candidate is the grid
/// minimum of g/f guarded by the curvature ratio at 1.
pub fn ratio_bound_exists(f: &Generator, g: &Generator) -> Result<Option<f64>, AnalysisError> {
    let d2f = second_difference(f, 1.0, 1e-4);
    if !(d2f > 0.0) {
        return Err(AnalysisError::SecondDerivativeNotPositive(d2f));
    }
    let d2g = second_difference(g, 1.0, 1e-4);
    if !(d2g > 0.0) {
        return Err(AnalysisError::SecondDerivativeNotPositive(d2g));
    }
    let lr = limit_ratios(f, g)?;
    if !(lr.beta0_at_zero > 0.0 && lr.beta0_at_inf > 0.0) {
        return Ok(None);
    }
    let mut beta = d2g / d2f;
    let steps = 600;
    for i in 0..=steps {
        let t = 10f64.powf(-6.0 + 12.0 * i as f64 / steps as f64);
        if (t - 1.0).abs() < 1e-9 {
            continue;
        }
        let fv = f.eval(t);
        if !(fv > 0.0) || fv.is_infinite() {
            continue;
        }
        let gv = g.eval(t);
        beta = beta.min(gv / fv);
    }
    Ok(Some(beta))
}

/// A 4-atom witness for an achievable target: the convex combination
/// `(1 - alpha) * pair(t1) + alpha * pair(t2)`, assembled on disjoint blocks
/// and re-verified by direct evaluation.
#[derive(Debug, Clone)]
pub struct MixturePair {
    pub t1: TrianglePoint,
    pub t2: TrianglePoint,
    pub alpha: f64,
    pub p: DiscreteDistribution,
    pub q: DiscreteDistribution,
    pub residual: f64,
}

/// Weight of the point on segment [a, b] closest to `target`.
fn best_alpha(a: DivergencePoint, b: DivergencePoint, target: DivergencePoint) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        0.0
    } else {
        (((target.x - a.x) * dx + (target.y - a.y) * dy) / len2).clamp(0.0, 1.0)
    }
}

/// Residual of the endpoint pair with the weight solved exactly by segment
/// projection. Returns the weight with the distance.
fn pair_residual(
    f: &Generator,
    g: &Generator,
    x: &[f64; 4],
    target: DivergencePoint,
) -> (f64, f64) {
    let eval = |p: f64, q: f64| -> Option<DivergencePoint> {
        let t = TrianglePoint::new(p, q).ok()?;
        let v = two_point_pair(f, g, t).ok()?;
        v.is_finite().then_some(v)
    };
    match (eval(x[0], x[1]), eval(x[2], x[3])) {
        (Some(a), Some(b)) => {
            let w = best_alpha(a, b, target);
            let pt = DivergencePoint::new(
                (1.0 - w) * a.x + w * b.x,
                (1.0 - w) * a.y + w * b.y,
            );
            (w, pt.dist(target))
        }
        _ => (0.0, f64::INFINITY),
    }
}

fn clamp_params(x: &mut [f64; 4]) {
    x[0] = x[0].clamp(0.0, 1.0);
    x[1] = x[1].clamp(0.0, 1.0);
    if x[0] > x[1] {
        x.swap(0, 1);
    }
    x[2] = x[2].clamp(0.0, 1.0);
    x[3] = x[3].clamp(0.0, 1.0);
    if x[2] > x[3] {
        x.swap(2, 3);
    }
}

/// Shrinking-step pattern search on the triangle coordinates of both
/// endpoints, with the mixture weight solved exactly at every evaluation.
/// Besides plain additive moves, each coordinate gets moves that are
/// multiplicative in the distance to 0 and to 1: near-boundary optima (for
/// targets close to a recession ray) sit at distances like 1e-6 from an edge
/// and are unreachable by fixed-size steps.
fn refine(
    f: &Generator,
    g: &Generator,
    mut x: [f64; 4],
    target: DivergencePoint,
    tol: f64,
    max_iters: usize,
) -> ([f64; 4], f64, f64) {
    clamp_params(&mut x);
    let (mut alpha, mut best) = pair_residual(f, g, &x, target);
    let mut step = 0.1;
    for _ in 0..max_iters {
        if best <= tol || step < 1e-16 {
            break;
        }
        let mut improved = false;
        for c in 0..4 {
            let v = x[c];
            let proposals = [
                v + step,
                v - step,
                v * (1.0 + step),
                v * (1.0 - step),
                1.0 - (1.0 - v) * (1.0 + step),
                1.0 - (1.0 - v) * (1.0 - step),
            ];
            for cand_v in proposals {
                if cand_v == v {
                    continue;
                }
                let mut cand = x;
                cand[c] = cand_v;
                clamp_params(&mut cand);
                let (w, r) = pair_residual(f, g, &cand, target);
                if r < best {
                    best = r;
                    alpha = w;
                    x = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (x, alpha, best)
}

/// Find a two-term mixture of 2-achievable points hitting `target` within
/// `tol`, and assemble the corresponding 4-atom distribution pair.
///
/// Search order: nearest cloud point, then segments between near-target cloud
/// points, then local coordinate descent on the triangle coordinates of both
/// endpoints and the weight.
pub fn achieve(
    f: &Generator,
    g: &Generator,
    cloud: &PointCloud,
    region: &ConvexRegion,
    target: DivergencePoint,
    tol: f64,
) -> Result<MixturePair, AnalysisError> {
    if !target.is_finite() {
        return Err(AnalysisError::TargetNotInside);
    }
    // The hull is inscribed, so true boundary points sit below its chords by
    // the chord sagitta; reject only targets clearly outside and let the
    // residual check settle the near-boundary band.
    if region.contains(target, tol) == Containment::Outside
        && region.signed_margin(target) < -1e-3
    {
        return Err(AnalysisError::TargetNotInside);
    }
    // rank cloud points by distance to the target
    let mut order: Vec<usize> = (0..cloud.finite_points.len()).collect();
    let dist = |i: usize| cloud.finite_points[i].dist(target);
    order.sort_by(|&a, &b| dist(a).partial_cmp(&dist(b)).unwrap());
    if order.is_empty() {
        return Err(AnalysisError::TargetNotInside);
    }

    let seed_from = |i: usize, j: usize| -> [f64; 4] {
        let a = cloud.finite_sources[i];
        let b = cloud.finite_sources[j];
        [a.p(), a.q(), b.p(), b.q()]
    };

    let mut seeds: Vec<[f64; 4]> = Vec::new();
    seeds.push(seed_from(order[0], order[0]));
    // segment scan: pair near-target points with the whole cloud (strided),
    // since for targets near a recession ray the second endpoint is far away
    let stride = (cloud.finite_points.len() / 400).max(1);
    let mut partners: Vec<usize> = order.iter().copied().take(200).collect();
    partners.extend((0..cloud.finite_points.len()).step_by(stride));
    let mut scored: Vec<([f64; 4], f64)> = Vec::new();
    for &i in order.iter().take(40) {
        let a = cloud.finite_points[i];
        for &j in &partners {
            let b = cloud.finite_points[j];
            let w = best_alpha(a, b, target);
            let seg = DivergencePoint::new(
                a.x + w * (b.x - a.x),
                a.y + w * (b.y - a.y),
            );
            scored.push((seed_from(i, j), seg.dist(target)));
        }
    }
    scored.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    seeds.extend(scored.into_iter().take(12).map(|(s, _)| s));

    let mut best: ([f64; 4], f64, f64) = (seeds[0], 0.0, f64::INFINITY);
    for seed in seeds {
        let (x, w, r) = refine(f, g, seed, target, tol, 10_000);
        if r < best.2 {
            best = (x, w, r);
        }
        if best.2 <= tol {
            break;
        }
    }
    let (x, alpha, r) = best;
    if r > tol {
        return Err(AnalysisError::ResidualNotMet { best: r });
    }
    let t1 = TrianglePoint::new(x[0], x[1])?;
    let t2 = TrianglePoint::new(x[2], x[3])?;
    let (p, q) = block_mixture(&t1.first()?, &t1.second()?, &t2.first()?, &t2.second()?, alpha)?;
    let direct = divergence_pair(f, g, &p, &q)?;
    let residual = direct.dist(target).max(r);
    Ok(MixturePair {
        t1,
        t2,
        alpha,
        p,
        q,
        residual,
    })
}

/// Counts from a Monte Carlo membership sweep. A correct construction never
/// reports `outside`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MembershipReport {
    pub inside: usize,
    pub outside: usize,
    pub unknown: usize,
    pub infinite: usize,
    #[serde(serialize_with = "crate::cli::ser_ext")]
    pub worst_margin: f64,
}

/// Draw `trials` pairs uniformly from the `d`-simplex (normalized unit-rate
/// exponentials, one counter-based substream per trial) and check every
/// finite pair against the containment oracle at tolerance `tol`.
pub fn verify_membership(
    f: &Generator,
    g: &Generator,
    region: &ConvexRegion,
    d: usize,
    trials: usize,
    seed: u64,
    tol: f64,
) -> Result<MembershipReport, AnalysisError> {
    if d < 2 {
        return Err(AnalysisError::DimensionTooSmall(d));
    }
    let sample_simplex = |rng: &mut ChaCha8Rng, d: usize| -> Vec<f64> {
        let raw: Vec<f64> = (0..d)
            .map(|_| -rng.gen_range(f64::MIN_POSITIVE..1.0f64).ln())
            .collect();
        let sum: f64 = raw.iter().sum();
        raw.into_iter().map(|x| x / sum).collect()
    };
    let results: Vec<(Containment, f64)> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i + 1);
            let p = DiscreteDistribution::new(sample_simplex(&mut rng, d)).unwrap();
            let q = DiscreteDistribution::new(sample_simplex(&mut rng, d)).unwrap();
            let pt = divergence_pair(f, g, &p, &q).unwrap();
            if !pt.is_finite() {
                return (Containment::Unknown, f64::NAN); // tallied as infinite below
            }
            (region.contains(pt, tol), region.signed_margin(pt))
        })
        .collect();
    let mut report = MembershipReport {
        inside: 0,
        outside: 0,
        unknown: 0,
        infinite: 0,
        worst_margin: f64::INFINITY,
    };
    for (c, margin) in results {
        if margin.is_nan() {
            report.infinite += 1;
            continue;
        }
        match c {
            Containment::Inside => report.inside += 1,
            Containment::Outside => report.outside += 1,
            Containment::Unknown => report.unknown += 1,
        }
        if margin < report.worst_margin {
            report.worst_margin = margin;
        }
    }
    Ok(report)
}

/// Search two-atom pairs for a witness of `D_g - gamma * D_f > bound`.
/// Scans geometric families hugging the simplex edges, where one divergence
/// can blow up while the other stays bounded. The small mass of each family
/// sits in the first atom and is stored exactly, so the scan reaches depths
/// where `1 - mass` would round to `1`. Only finite values count as
/// witnesses; returns the best `(P, Q, D_g - gamma * D_f)` found.
pub fn unbounded_witness(
    f: &Generator,
    g: &Generator,
    gamma: f64,
) -> Option<(DiscreteDistribution, DiscreteDistribution, f64)> {
    let mut best: Option<(DiscreteDistribution, DiscreteDistribution, f64)> = None;
    let mut consider = |pa: f64, qa: f64| {
        let (Ok(p), Ok(q)) = (
            DiscreteDistribution::new(vec![pa, 1.0 - pa]),
            DiscreteDistribution::new(vec![qa, 1.0 - qa]),
        ) else {
            return;
        };
        let (Ok(x), Ok(y)) = (divergence(f, &p, &q), divergence(g, &p, &q)) else {
            return;
        };
        let val = y - gamma * x;
        if !val.is_finite() {
            return;
        }
        if best.as_ref().map_or(true, |&(_, _, b)| val > b) {
            best = Some((p, q, val));
        }
    };
    for k in 1..=1020 {
        let d = 2f64.powi(-k);
        if d == 0.0 {
            break;
        }
        consider(d, 0.5);
        consider(0.5, d);
        consider(d, 1.0 - d);
        consider(1.0 - d, d);
        consider(0.0, d);
        consider(d, 1.0);
        consider(1.0, d);
        consider(d, 0.0);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{
        make_jensen_shannon, make_lecam, make_power, make_total_variation, Generator,
    };
    use crate::jointrange::{cloud_2achievable, joint_range, region_from_cloud, sample_triangle};
    use approx::assert_abs_diff_eq;

    fn tp(p: f64, q: f64) -> TrianglePoint {
        TrianglePoint::new(p, q).unwrap()
    }

    #[test]
    fn jacobian_matches_closed_form_fixture() {
        // power-2 vs power-3 determinant is -(1/12) ((p-q)/(q(1-q)))^4
        let f = make_power(2.0);
        let g = make_power(3.0);
        let (p, q) = (0.01f64, 0.5f64);
        let expected = -((p - q) / (q * (1.0 - q))).powi(4) / 12.0;
        let det = jacobian_det(&f, &g, tp(p, q), 1e-6).unwrap();
        assert_abs_diff_eq!(det, expected, epsilon = 1e-10);
    }

    #[test]
    fn jacobian_finite_differences_agree_with_closed_form() {
        let f = make_power(2.0);
        let g = make_power(3.0);
        // strip the derivative rules to force the difference path
        let f_fd = Generator::custom("chi2-fd", {
            let f = f.clone();
            move |t| f.eval(t)
        }, f.value_at_zero(), f.conjugate_at_zero());
        let g_fd = Generator::custom("d3-fd", {
            let g = g.clone();
            move |t| g.eval(t)
        }, g.value_at_zero(), g.conjugate_at_zero());
        for (p, q) in [(0.1, 0.5), (0.2, 0.8), (0.3, 0.6)] {
            let exact = jacobian_det(&f, &g, tp(p, q), 1e-6).unwrap();
            let fd = jacobian_det(&f_fd, &g_fd, tp(p, q), 1e-6).unwrap();
            assert_abs_diff_eq!(fd, exact, epsilon = 1e-6 * exact.abs().max(1e-6));
        }
    }

    #[test]
    fn jacobian_zero_cases() {
        let tv = make_total_variation();
        let chi2 = make_power(2.0);
        for p in [0.1, 0.25, 0.4] {
            let det = jacobian_det(&tv, &chi2, tp(p, 0.5), 1e-6).unwrap();
            assert!(det.abs() < 1e-6, "p={p}: {det}");
        }
        let f = make_power(2.0);
        assert_abs_diff_eq!(
            jacobian_det(&f, &f, tp(0.2, 0.7), 1e-6).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        assert!(matches!(
            jacobian_det(&f, &f, tp(0.0, 0.5), 1e-6),
            Err(AnalysisError::BoundaryPoint(..))
        ));
    }

    #[test]
    fn singular_locus_fixtures() {
        let tv = make_total_variation();
        let chi2 = make_power(2.0);
        let locus = singular_locus(&tv, &chi2, 48, 1e-10).unwrap();
        assert!(!locus.is_empty());
        for s in &locus {
            assert!(
                (s.point.q() - 0.5).abs() < 1e-8,
                "q = {} off the singular line",
                s.point.q()
            );
        }

        let lecam = make_lecam();
        let locus = singular_locus(&tv, &lecam, 48, 1e-10).unwrap();
        assert!(!locus.is_empty());
        for s in &locus {
            assert!(
                (s.point.p() + s.point.q() - 1.0).abs() < 1e-8,
                "p+q = {}",
                s.point.p() + s.point.q()
            );
        }

        let d3 = make_power(3.0);
        let locus = singular_locus(&chi2, &d3, 32, 1e-10).unwrap();
        assert!(locus.is_empty());
    }

    #[test]
    fn limit_ratio_fixtures() {
        let f = make_power(2.0);
        let lr = limit_ratios(&f, &f).unwrap();
        assert_abs_diff_eq!(lr.beta0_at_zero, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(lr.gamma0_at_inf, 1.0, epsilon = 1e-12);

        // reverse-KL over KL blows up toward zero
        let kl = make_power(1.0);
        let rkl = make_power(0.0);
        let lr = limit_ratios(&kl, &rkl).unwrap();
        assert!(lr.beta0_at_zero.is_infinite());
        assert!(!lr.f_zero_infinite);
        assert!(lr.f_conj_infinite);
        assert!(lr.g_zero_infinite);
        assert!(!lr.g_conj_infinite);
        // and decays toward infinity
        assert!(lr.beta0_at_inf < 0.1);

        let d3 = make_power(3.0);
        let lr = limit_ratios(&f, &d3).unwrap();
        assert!(lr.beta0_at_inf.is_infinite());
    }

    #[test]
    fn recession_ray_fixtures() {
        let rays = recession_rays(&make_power(1.0), &make_power(0.0));
        assert!(rays.iter().any(|r| r.dx == 1.0 && r.dy == 0.0));
        assert!(rays.iter().any(|r| r.dx == 0.0 && r.dy == 1.0));

        let rays = recession_rays(&make_power(2.0), &make_power(3.0));
        assert_eq!(rays.len(), 1);
        assert!(rays[0].dx == 0.0 && rays[0].dy == 1.0);

        let rays = recession_rays(&make_total_variation(), &make_lecam());
        assert!(rays.is_empty());
    }

    #[test]
    fn ratio_bound_fixtures() {
        let f = make_power(2.0);
        assert_abs_diff_eq!(
            ratio_bound_exists(&f, &f).unwrap().unwrap(),
            1.0,
            epsilon = 1e-9
        );
        let beta = ratio_bound_exists(&f, &make_power(3.0)).unwrap().unwrap();
        assert!(beta > 0.0);
        // liminf of rkl/kl at infinity is 0: no global multiplier
        assert!(ratio_bound_exists(&make_power(1.0), &make_power(0.0))
            .unwrap()
            .is_none());
    }

    #[test]
    fn achieve_fixture_targets() {
        let tv = make_total_variation();
        let chi2 = make_power(2.0);
        let cloud = cloud_2achievable(&tv, &chi2, &sample_triangle(128).unwrap());
        let region = region_from_cloud(&tv, &chi2, &cloud, (20.0, 20.0)).unwrap();

        let m = achieve(&tv, &chi2, &cloud, &region, DivergencePoint::new(0.0, 0.0), 1e-6).unwrap();
        assert!(m.residual <= 1e-6);

        let m = achieve(&tv, &chi2, &cloud, &region, DivergencePoint::new(1.0, 0.5), 1e-6).unwrap();
        assert!(m.residual <= 1e-6);
        let direct = divergence_pair(&tv, &chi2, &m.p, &m.q).unwrap();
        assert!(direct.dist(DivergencePoint::new(1.0, 0.5)) <= 1e-6);

        // midpoint of the boundary-curve points (0.5, 0.125) and (1, 0.5)
        let target = DivergencePoint::new(0.75, 0.3125);
        let m = achieve(&tv, &chi2, &cloud, &region, target, 1e-6).unwrap();
        let direct = divergence_pair(&tv, &chi2, &m.p, &m.q).unwrap();
        assert!(direct.dist(target) <= 1e-6);
        assert_eq!(m.p.len(), 4);

        assert!(matches!(
            achieve(&tv, &chi2, &cloud, &region, DivergencePoint::new(1.0, 0.1), 1e-6),
            Err(AnalysisError::TargetNotInside)
        ));
    }

    #[test]
    fn verify_membership_smoke() {
        let tv = make_total_variation();
        let js = make_jensen_shannon();
        let region = joint_range(&tv, &js, 256, (20.0, 20.0)).unwrap();
        let report = verify_membership(&tv, &js, &region, 8, 2000, 7, 1e-6).unwrap();
        assert_eq!(report.outside, 0);
        assert!(report.inside > 0);
    }

    #[test]
    fn verify_membership_is_deterministic() {
        let tv = make_total_variation();
        let chi2 = make_power(2.0);
        let region = joint_range(&tv, &chi2, 64, (20.0, 20.0)).unwrap();
        let a = verify_membership(&tv, &chi2, &region, 4, 500, 42, 1e-6).unwrap();
        let b = verify_membership(&tv, &chi2, &region, 4, 500, 42, 1e-6).unwrap();
        assert_eq!(a.inside, b.inside);
        assert_eq!(a.worst_margin, b.worst_margin);
    }

    #[test]
    fn unbounded_witness_for_kl_pair() {
        let kl = make_power(1.0);
        let rkl = make_power(0.0);
        for gamma in [10.0, 100.0] {
            let (_, _, v) = unbounded_witness(&kl, &rkl, gamma).unwrap();
            assert!(v.is_finite() && v > 1.0, "gamma={gamma}: {v}");
            let (_, _, v) = unbounded_witness(&rkl, &kl, gamma).unwrap();
            assert!(v.is_finite() && v > 1.0, "swapped gamma={gamma}: {v}");
        }
    }
}
