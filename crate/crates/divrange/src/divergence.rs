//! Divergence evaluation on finite discrete distributions.
//!
//! `D_f(P, Q) = sum_{q_j > 0} q_j f(p_j / q_j) + f*(0) * P(q = 0)` with the
//! conventions: an atom with `p_j = q_j = 0` contributes nothing, an atom with
//! `q_j > 0, p_j = 0` contributes `q_j f(0)`, and the escaped-mass term uses
//! `0 * inf = 0`. Any infinite summand makes the whole value `+inf`.

use thiserror::Error;

use crate::generators::Generator;

/// Tolerance on the total mass of a distribution. Inputs outside it are
/// rejected rather than renormalized.
pub const NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum DivergenceError {
    #[error("distributions have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("mass at index {index} is invalid: {value}")]
    InvalidMass { index: usize, value: f64 },
    #[error("masses sum to {0}, outside 1 +/- 1e-12")]
    BadNormalization(f64),
    #[error("mixture weight {0} outside [0, 1]")]
    AlphaOutOfRange(f64),
    #[error("triangle point ({0}, {1}) violates 0 <= p <= q <= 1")]
    InvalidTrianglePoint(f64, f64),
}

/// A finite probability vector. Zero-mass atoms are kept, not stripped.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution(Vec<f64>);

impl DiscreteDistribution {
    pub fn new(masses: Vec<f64>) -> Result<Self, DivergenceError> {
        for (index, &value) in masses.iter().enumerate() {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(DivergenceError::InvalidMass { index, value });
            }
        }
        let sum: f64 = masses.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(DivergenceError::BadNormalization(sum));
        }
        Ok(DiscreteDistribution(masses))
    }

    /// Binary distribution `(1 - p, p)`.
    pub fn binary(p: f64) -> Result<Self, DivergenceError> {
        Self::new(vec![1.0 - p, p])
    }

    pub fn masses(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A pair of divergence values `(D_f, D_g)`; coordinates are extended reals,
/// finite nonnegative or `+inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergencePoint {
    pub x: f64,
    pub y: f64,
}

impl DivergencePoint {
    pub fn new(x: f64, y: f64) -> Self {
        DivergencePoint { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dist(&self, other: DivergencePoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// A point of the two-point parameter triangle `0 <= p <= q <= 1`,
/// standing for the pair `P = (1 - p, p)`, `Q = (1 - q, q)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrianglePoint {
    p: f64,
    q: f64,
}

impl TrianglePoint {
    pub fn new(p: f64, q: f64) -> Result<Self, DivergenceError> {
        if p.is_finite() && q.is_finite() && 0.0 <= p && p <= q && q <= 1.0 {
            Ok(TrianglePoint { p, q })
        } else {
            Err(DivergenceError::InvalidTrianglePoint(p, q))
        }
    }

    /// Build a triangle point, reflecting `(p, q) -> (1 - p, 1 - q)` when
    /// `p > q`. The divergence pair is invariant under the reflection.
    pub fn canonical(p: f64, q: f64) -> Result<Self, DivergenceError> {
        if p > q {
            Self::new(1.0 - p, 1.0 - q)
        } else {
            Self::new(p, q)
        }
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn first(&self) -> Result<DiscreteDistribution, DivergenceError> {
        DiscreteDistribution::binary(self.p)
    }

    pub fn second(&self) -> Result<DiscreteDistribution, DivergenceError> {
        DiscreteDistribution::binary(self.q)
    }
}

/// Evaluate `D_f(P, Q)`.
pub fn divergence(
    f: &Generator,
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
) -> Result<f64, DivergenceError> {
    if p.len() != q.len() {
        return Err(DivergenceError::LengthMismatch(p.len(), q.len()));
    }
    let mut total = 0.0;
    let mut escaped = 0.0;
    for (&pj, &qj) in p.masses().iter().zip(q.masses()) {
        if qj > 0.0 {
            total += if pj == 0.0 {
                qj * f.value_at_zero()
            } else {
                qj * f.eval(pj / qj)
            };
        } else {
            escaped += pj;
        }
    }
    if escaped > 0.0 {
        total += f.conjugate_at_zero() * escaped;
    }
    Ok(total)
}

/// Evaluate both coordinates of the divergence pair.
pub fn divergence_pair(
    f: &Generator,
    g: &Generator,
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
) -> Result<DivergencePoint, DivergenceError> {
    Ok(DivergencePoint::new(
        divergence(f, p, q)?,
        divergence(g, p, q)?,
    ))
}

/// Divergence pair at a triangle point.
pub fn two_point_pair(
    f: &Generator,
    g: &Generator,
    t: TrianglePoint,
) -> Result<DivergencePoint, DivergenceError> {
    divergence_pair(f, g, &t.first()?, &t.second()?)
}

/// Assemble the block-disjoint mixture
/// `P_alpha = ((1 - alpha) P0 atoms, alpha P1 atoms)` and similarly for Q.
/// Divergences are linear in `alpha` across such mixtures.
pub fn block_mixture(
    p0: &DiscreteDistribution,
    q0: &DiscreteDistribution,
    p1: &DiscreteDistribution,
    q1: &DiscreteDistribution,
    alpha: f64,
) -> Result<(DiscreteDistribution, DiscreteDistribution), DivergenceError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(DivergenceError::AlphaOutOfRange(alpha));
    }
    fn scale<'a>(xs: &'a [f64], w: f64) -> impl Iterator<Item = f64> + 'a {
        xs.iter().map(move |&x| w * x)
    }
    let p: Vec<f64> = scale(p0.masses(), 1.0 - alpha)
        .chain(scale(p1.masses(), alpha))
        .collect();
    let q: Vec<f64> = scale(q0.masses(), 1.0 - alpha)
        .chain(scale(q1.masses(), alpha))
        .collect();
    Ok((DiscreteDistribution::new(p)?, DiscreteDistribution::new(q)?))
}
