//! Construction of the joint range of a divergence pair.
//!
//! The 2-achievable points are the image of the parameter triangle
//! `0 <= p <= q <= 1`; the full achievable set is the convex hull of that
//! image, unbounded directions included. The hull is certified only inside a
//! user-chosen window since the achievable set is typically unbounded.

use rayon::prelude::*;
use thiserror::Error;

use crate::analysis;
use crate::divergence::{two_point_pair, DivergenceError, DivergencePoint, TrianglePoint};
use crate::generators::Generator;


#[derive(Debug, Error)]
pub enum RangeError {
    #[error("grid size {0} too small (need >= 2)")]
    GridTooSmall(usize),
    #[error("empty point set")]
    EmptyPointSet,
    #[error("window must be positive, got ({0}, {1})")]
    BadWindow(f64, f64),
    #[error("x = {x} outside certified extent [{lo}, {hi}]")]
    XOutOfExtent { x: f64, lo: f64, hi: f64 },
    #[error(transparent)]
    Divergence(#[from] DivergenceError),
}

/// Structured sample of the triangle: a uniform lattice plus geometric
/// refinement toward the three edges, where the boundary curves of the range
/// live. Includes the exact corners (0,0), (0,1), (1,1).
pub fn sample_triangle(n: usize) -> Result<Vec<TrianglePoint>, RangeError> {
    if n < 2 {
        return Err(RangeError::GridTooSmall(n));
    }
    let mut coords: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    for k in 1..=40 {
        let d = 2f64.powi(-k);
        coords.push(d);
        coords.push(1.0 - d);
    }
    coords.sort_by(|a, b| a.partial_cmp(b).unwrap());
    coords.dedup();

    let mut pts = Vec::with_capacity(coords.len() * (coords.len() + 1) / 2);
    for (i, &p) in coords.iter().enumerate() {
        for &q in &coords[i..] {
            pts.push(TrianglePoint::new(p, q).expect("lattice point in triangle"));
        }
    }
    // off-diagonal refinement: points at distance 2^-k from p = q
    for &s in &coords {
        for k in 1..=40 {
            let d = 2f64.powi(-k);
            if s - d >= 0.0 {
                pts.push(TrianglePoint::new(s - d, s).unwrap());
            }
            if s + d <= 1.0 {
                pts.push(TrianglePoint::new(s, s + d).unwrap());
            }
        }
    }
    Ok(pts)
}

/// A sampled triangle point whose divergence pair had an infinite coordinate.
#[derive(Debug, Clone, Copy)]
pub struct LedgerEntry {
    pub at: TrianglePoint,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfiniteKind {
    XInfinite,
    YInfinite,
    BothInfinite,
}

impl LedgerEntry {
    pub fn kind(&self) -> InfiniteKind {
        match (self.x.is_infinite(), self.y.is_infinite()) {
            (true, true) => InfiniteKind::BothInfinite,
            (true, false) => InfiniteKind::XInfinite,
            _ => InfiniteKind::YInfinite,
        }
    }
}

/// Image of a triangle sample under the divergence pair, split into finite
/// points (with their preimages) and a ledger of samples that hit infinity.
#[derive(Debug, Clone)]
pub struct PointCloud {
    pub finite_points: Vec<DivergencePoint>,
    pub finite_sources: Vec<TrianglePoint>,
    pub infinite_ledger: Vec<LedgerEntry>,
    pub samples: usize,
}

/// Map triangle points through the divergence pair. Pure data-parallel sweep.
pub fn cloud_2achievable(f: &Generator, g: &Generator, pts: &[TrianglePoint]) -> PointCloud {
    let pairs: Vec<(TrianglePoint, DivergencePoint)> = pts
        .par_iter()
        .map(|&t| {
            let v = two_point_pair(f, g, t).expect("two-point evaluation cannot fail");
            (t, v)
        })
        .collect();
    let mut cloud = PointCloud {
        finite_points: Vec::with_capacity(pairs.len()),
        finite_sources: Vec::with_capacity(pairs.len()),
        infinite_ledger: Vec::new(),
        samples: pts.len(),
    };
    for (t, v) in pairs {
        if v.is_finite() {
            cloud.finite_points.push(v);
            cloud.finite_sources.push(t);
        } else {
            cloud.infinite_ledger.push(LedgerEntry { at: t, x: v.x, y: v.y });
        }
    }
    cloud
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn hull_raw(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }
    // The pop threshold scales with the candidate edge length: any dropped
    // vertex then lies within 1e-12 of the edge replacing it, and clusters of
    // near-duplicate points cannot freeze the chain with rounding-noise
    // "left turns" (their micro-edges are ejected as soon as a distant point
    // arrives).
    let turns_in = |o: [f64; 2], a: [f64; 2], p: [f64; 2]| {
        cross(o, a, p) <= 1e-12 * (p[0] - o[0]).hypot(p[1] - o[1])
    };
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && turns_in(lower[lower.len() - 2], lower[lower.len() - 1], p) {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && turns_in(upper[upper.len() - 2], upper[upper.len() - 1], p) {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Monotone-chain convex hull. Output is counterclockwise, starting from the
/// lexicographic minimum; collinear points are dropped.
pub fn hull(points: &[DivergencePoint]) -> Result<Vec<DivergencePoint>, RangeError> {
    if points.is_empty() {
        return Err(RangeError::EmptyPointSet);
    }
    let raw: Vec<[f64; 2]> = points.iter().map(|p| [p.x, p.y]).collect();
    Ok(hull_raw(&raw)
        .into_iter()
        .map(|p| DivergencePoint::new(p[0], p[1]))
        .collect())
}

/// Unit recession direction in the closed first quadrant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayDir {
    pub dx: f64,
    pub dy: f64,
}

impl RayDir {
    /// Direction of slope `s` (possibly infinite), normalized.
    pub fn from_slope(s: f64) -> Self {
        if s.is_infinite() {
            RayDir { dx: 0.0, dy: 1.0 }
        } else {
            let n = s.hypot(1.0);
            RayDir {
                dx: 1.0 / n,
                dy: s / n,
            }
        }
    }

    pub fn approx_eq(&self, other: &RayDir) -> bool {
        (self.dx - other.dx).abs() < 1e-9 && (self.dy - other.dy).abs() < 1e-9
    }
}

/// Classification returned by the containment oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Containment {
    Inside,
    Outside,
    Unknown,
}

/// Convex hull of the clipped 2-achievable cloud plus recession rays; the
/// hull is certified inside `[0, window.0] x [0, window.1]` only.
#[derive(Debug, Clone)]
pub struct ConvexRegion {
    pub hull: Vec<DivergencePoint>,
    pub rays: Vec<RayDir>,
    pub window: (f64, f64),
    /// hull with rays extruded far beyond the window, for membership tests
    augmented: Vec<[f64; 2]>,
}

/// Sample the triangle, map it through `(D_f, D_g)`, and hull the finite
/// image clipped to the window. Recession rays are attached from the limit
/// behavior of `g/f` at 0 and infinity; attachment is conservative, so
/// containment queries near the window edge may answer `Unknown`.
pub fn joint_range(
    f: &Generator,
    g: &Generator,
    n: usize,
    window: (f64, f64),
) -> Result<ConvexRegion, RangeError> {
    let cloud = cloud_2achievable(f, g, &sample_triangle(n)?);
    region_from_cloud(f, g, &cloud, window)
}

/// Same as [`joint_range`] but reusing an existing cloud.
pub fn region_from_cloud(
    f: &Generator,
    g: &Generator,
    cloud: &PointCloud,
    window: (f64, f64),
) -> Result<ConvexRegion, RangeError> {
    if !(window.0 > 0.0 && window.1 > 0.0) {
        return Err(RangeError::BadWindow(window.0, window.1));
    }
    let clipped: Vec<DivergencePoint> = cloud
        .finite_points
        .iter()
        .copied()
        .filter(|p| p.x <= window.0 && p.y <= window.1)
        .collect();
    if clipped.is_empty() {
        return Err(RangeError::EmptyPointSet);
    }
    let hull = hull(&clipped)?;
    let rays = analysis::recession_rays(f, g);
    let augmented = augment(&hull, &rays, window);
    Ok(ConvexRegion {
        hull,
        rays,
        window,
        augmented,
    })
}

fn augment(hull: &[DivergencePoint], rays: &[RayDir], window: (f64, f64)) -> Vec<[f64; 2]> {
    let reach = 1000.0 * (window.0 + window.1 + 1.0);
    let mut pts: Vec<[f64; 2]> = hull.iter().map(|p| [p.x, p.y]).collect();
    for d in rays {
        for h in hull {
            pts.push([h.x + reach * d.dx, h.y + reach * d.dy]);
        }
    }
    hull_raw(&pts)
}

/// Signed distance from `pt` to the boundary of a convex CCW polygon;
/// positive inside. Degenerate polygons (point, segment) give the negated
/// distance to the degenerate set.
fn polygon_margin(poly: &[[f64; 2]], pt: [f64; 2]) -> f64 {
    match poly.len() {
        0 => f64::NEG_INFINITY,
        1 => -((pt[0] - poly[0][0]).hypot(pt[1] - poly[0][1])),
        2 => -segment_dist(poly[0], poly[1], pt),
        _ => {
            let mut margin = f64::INFINITY;
            for i in 0..poly.len() {
                let a = poly[i];
                let b = poly[(i + 1) % poly.len()];
                let len = (b[0] - a[0]).hypot(b[1] - a[1]);
                if len == 0.0 {
                    continue;
                }
                margin = margin.min(cross(a, b, pt) / len);
            }
            margin
        }
    }
}

fn segment_dist(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    (p[0] - a[0] - t * dx).hypot(p[1] - a[1] - t * dy)
}

impl ConvexRegion {
    pub fn x_extent(&self) -> (f64, f64) {
        let lo = self.hull.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
        let hi = self
            .hull
            .iter()
            .map(|p| p.x)
            .fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    fn has_axis_ray(&self, horizontal: bool) -> bool {
        self.rays.iter().any(|d| {
            if horizontal {
                d.dx > 0.0 && d.dy.abs() < 1e-12
            } else {
                d.dy > 0.0 && d.dx.abs() < 1e-12
            }
        })
    }

    /// Point for the margin test: coordinates beyond the hull along a pure
    /// axis ray collapse onto the hull extent, which is what ray coverage
    /// means for those directions.
    fn clamp_for_margin(&self, pt: DivergencePoint) -> [f64; 2] {
        let (_, x_hi) = self.x_extent();
        let y_hi = self
            .hull
            .iter()
            .map(|p| p.y)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut x = pt.x;
        let mut y = pt.y;
        if self.has_axis_ray(true) && x > x_hi {
            x = x_hi;
        }
        if self.has_axis_ray(false) && y > y_hi {
            y = y_hi;
        }
        [x, y]
    }

    /// Signed inner margin of a finite point against the ray-extended hull.
    pub fn signed_margin(&self, pt: DivergencePoint) -> f64 {
        polygon_margin(&self.augmented, self.clamp_for_margin(pt))
    }

    /// Membership oracle. Finite points well inside the window resolve to
    /// `Inside`/`Outside`; points beyond the certified window or with an
    /// infinite coordinate are `Inside` only when a ray direction covers
    /// them, otherwise `Unknown`.
    pub fn contains(&self, pt: DivergencePoint, tol: f64) -> Containment {
        assert!(tol > 0.0, "containment tolerance must be positive");
        if pt.x.is_nan() || pt.y.is_nan() {
            return Containment::Unknown;
        }
        match (pt.x.is_infinite(), pt.y.is_infinite()) {
            (true, true) => {
                let covers = self.rays.iter().any(|d| d.dx > 1e-12 && d.dy > 1e-12)
                    || (self.has_axis_ray(true) && self.has_axis_ray(false));
                return if covers {
                    Containment::Inside
                } else {
                    Containment::Unknown
                };
            }
            (true, false) => {
                return if self.has_axis_ray(true) {
                    Containment::Inside
                } else {
                    Containment::Unknown
                };
            }
            (false, true) => {
                return if self.has_axis_ray(false) {
                    Containment::Inside
                } else {
                    Containment::Unknown
                };
            }
            _ => {}
        }
        let margin = self.signed_margin(pt);
        if margin >= -tol {
            Containment::Inside
        } else if pt.x <= 0.9 * self.window.0 && pt.y <= 0.9 * self.window.1 {
            Containment::Outside
        } else {
            Containment::Unknown
        }
    }
}

/// Envelope functions of the region: for each grid `x`, the least and
/// greatest `D_g` values compatible with `D_f = x`. `y_upper` is `+inf`
/// wherever an upward recession direction applies.
#[derive(Debug, Clone)]
pub struct Envelope {
    pub xs: Vec<f64>,
    pub y_lower: Vec<f64>,
    pub y_upper: Vec<f64>,
}

fn lex_max_index(hull: &[DivergencePoint]) -> usize {
    let mut best = 0;
    for (i, p) in hull.iter().enumerate() {
        let b = hull[best];
        if p.x > b.x || (p.x == b.x && p.y > b.y) {
            best = i;
        }
    }
    best
}

fn interp_chain(chain: &[DivergencePoint], x: f64) -> f64 {
    // chain has nondecreasing x; vertical runs collapse to their best value
    for w in chain.windows(2) {
        let (a, b) = (w[0], w[1]);
        if x >= a.x.min(b.x) - 1e-12 && x <= a.x.max(b.x) + 1e-12 {
            if (b.x - a.x).abs() < 1e-15 {
                return a.y.min(b.y);
            }
            let t = ((x - a.x) / (b.x - a.x)).clamp(0.0, 1.0);
            return a.y + t * (b.y - a.y);
        }
    }
    // off the end within tolerance: nearest endpoint
    let first = chain.first().unwrap();
    let last = chain.last().unwrap();
    if (x - first.x).abs() <= (x - last.x).abs() {
        first.y
    } else {
        last.y
    }
}

/// Lower envelope over the grid `xs`, walking the lower hull chain.
pub fn lower_envelope(region: &ConvexRegion, xs: &[f64]) -> Result<Envelope, RangeError> {
    envelope(region, xs)
}

/// Upper envelope over the grid `xs`; `+inf` where a vertical ray applies.
pub fn upper_envelope(region: &ConvexRegion, xs: &[f64]) -> Result<Envelope, RangeError> {
    envelope(region, xs)
}

/// Both envelope chains evaluated on `xs`.
pub fn envelope(region: &ConvexRegion, xs: &[f64]) -> Result<Envelope, RangeError> {
    let (lo, hi) = region.x_extent();
    for &x in xs {
        if x < lo - 1e-12 || x > hi + 1e-12 {
            return Err(RangeError::XOutOfExtent { x, lo, hi });
        }
    }
    let hull = &region.hull;
    let (lower, upper): (Vec<DivergencePoint>, Vec<DivergencePoint>) = if hull.len() == 1 {
        (vec![hull[0], hull[0]], vec![hull[0], hull[0]])
    } else {
        let r = lex_max_index(hull);
        let lower: Vec<DivergencePoint> = hull[..=r].to_vec();
        let mut upper: Vec<DivergencePoint> = hull[r..].to_vec();
        upper.push(hull[0]);
        upper.reverse(); // nondecreasing x
        (lower, upper)
    };
    let unbounded_above = region.rays.iter().any(|d| d.dy > 1e-12);
    let y_lower: Vec<f64> = xs.iter().map(|&x| interp_chain(&lower, x)).collect();
    let y_upper: Vec<f64> = xs
        .iter()
        .map(|&x| {
            if unbounded_above {
                f64::INFINITY
            } else {
                interp_chain(&upper, x)
            }
        })
        .collect();
    Ok(Envelope {
        xs: xs.to_vec(),
        y_lower,
        y_upper,
    })
}
