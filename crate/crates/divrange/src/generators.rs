//! Generator functions for f-divergences.
//!
//! A generator is a convex function `f: (0, inf) -> R` with `f(1) = 0`,
//! carried together with its limit `f(0) = lim_{t->0} f(t)` and the conjugate
//! limit `f*(0) = lim_{t->inf} f(t)/t`. The conjugate transform is
//! `f*(t) = t f(1/t)`, an involution that swaps the roles of the two
//! arguments of the induced divergence.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

type EvalFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A convex divergence generator with its limit values at 0 and infinity.
///
/// Immutable after construction; all evaluation is pure, so generators can be
/// shared freely across threads.
#[derive(Clone)]
pub struct Generator {
    name: String,
    eval: EvalFn,
    value_at_zero: f64,
    conjugate_at_zero: f64,
    deriv1: Option<EvalFn>,
    deriv2: Option<EvalFn>,
}

impl fmt::Debug for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Generator")
            .field("name", &self.name)
            .field("value_at_zero", &self.value_at_zero)
            .field("conjugate_at_zero", &self.conjugate_at_zero)
            .finish()
    }
}

impl Generator {
    /// Build a generator from a raw evaluation rule and its two stored limits.
    /// No derivative rules are attached; downstream consumers fall back to
    /// finite differences.
    pub fn custom(
        name: impl Into<String>,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        value_at_zero: f64,
        conjugate_at_zero: f64,
    ) -> Self {
        Generator {
            name: name.into(),
            eval: Arc::new(eval),
            value_at_zero,
            conjugate_at_zero,
            deriv1: None,
            deriv2: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Evaluate f at `t > 0`. Overflowing intermediates saturate to `+inf`.
    pub fn eval(&self, t: f64) -> f64 {
        debug_assert!(t > 0.0, "generator evaluated at t = {t}");
        let v = (self.eval)(t);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }

    /// f(0), possibly `+inf`.
    pub fn value_at_zero(&self) -> f64 {
        self.value_at_zero
    }

    /// f*(0) = lim f(t)/t for t -> inf, possibly `+inf`.
    pub fn conjugate_at_zero(&self) -> f64 {
        self.conjugate_at_zero
    }

    /// Closed-form first derivative, when the catalog entry carries one.
    pub fn deriv1(&self, t: f64) -> Option<f64> {
        self.deriv1.as_ref().map(|d| d(t))
    }

    /// Closed-form second derivative, when available.
    pub fn deriv2(&self, t: f64) -> Option<f64> {
        self.deriv2.as_ref().map(|d| d(t))
    }

    pub fn has_deriv1(&self) -> bool {
        self.deriv1.is_some()
    }
}

/// Power-family generator of order `alpha`.
///
/// For `alpha (alpha - 1) != 0` this is
/// `(t^alpha - alpha (t - 1) - 1) / (alpha (alpha - 1))`; the orders 0 and 1
/// are filled in by their limits `-ln t + t - 1` and `t ln t - t + 1`.
/// Order 2 is half the Pearson chi-square statistic, order 1 the information
/// divergence, order 1/2 the Hellinger divergence `2 (sqrt(t) - 1)^2`.
pub fn make_power(alpha: f64) -> Generator {
    assert!(alpha.is_finite(), "power order must be finite");
    let name = format!("power:{alpha}");
    let (eval, d1, d2): (EvalFn, EvalFn, EvalFn) = if alpha == 0.0 {
        (
            Arc::new(|t: f64| -t.ln() + t - 1.0),
            Arc::new(|t: f64| 1.0 - t.recip()),
            Arc::new(|t: f64| (t * t).recip()),
        )
    } else if alpha == 1.0 {
        (
            Arc::new(|t: f64| t * t.ln() - t + 1.0),
            Arc::new(|t: f64| t.ln()),
            Arc::new(|t: f64| t.recip()),
        )
    } else {
        let a = alpha;
        (
            Arc::new(move |t: f64| (t.powf(a) - a * (t - 1.0) - 1.0) / (a * (a - 1.0))),
            Arc::new(move |t: f64| (t.powf(a - 1.0) - 1.0) / (a - 1.0)),
            Arc::new(move |t: f64| t.powf(a - 2.0)),
        )
    };
    Generator {
        name,
        eval,
        value_at_zero: if alpha <= 0.0 {
            f64::INFINITY
        } else {
            alpha.recip()
        },
        conjugate_at_zero: if alpha >= 1.0 {
            f64::INFINITY
        } else {
            (1.0 - alpha).recip()
        },
        deriv1: Some(d1),
        deriv2: Some(d2),
    }
}

/// Total variation generator `|t - 1|`, inducing the L1 distance.
///
/// The first derivative is the subgradient `sign(t - 1)` with value 0 at the
/// kink; no second derivative is attached.
pub fn make_total_variation() -> Generator {
    Generator {
        name: "tv".into(),
        eval: Arc::new(|t: f64| (t - 1.0).abs()),
        value_at_zero: 1.0,
        conjugate_at_zero: 1.0,
        deriv1: Some(Arc::new(|t: f64| {
            if t == 1.0 {
                0.0
            } else {
                (t - 1.0).signum()
            }
        })),
        deriv2: None,
    }
}

/// LeCam generator `(t - 1)^2 / (4 (t + 1))`, the symmetrized chi-square
/// divergence `(1/2) D_2(P, M) + (1/2) D_2(Q, M)` with `M = (P + Q)/2`.
pub fn make_lecam() -> Generator {
    Generator {
        name: "lecam".into(),
        eval: Arc::new(|t: f64| {
            let d = t - 1.0;
            d * d / (4.0 * (t + 1.0))
        }),
        value_at_zero: 0.25,
        conjugate_at_zero: 0.25,
        deriv1: Some(Arc::new(|t: f64| {
            let s = t + 1.0;
            (t - 1.0) * (t + 3.0) / (4.0 * s * s)
        })),
        deriv2: Some(Arc::new(|t: f64| {
            let s = t + 1.0;
            2.0 / (s * s * s)
        })),
    }
}

/// Jensen-Shannon generator
/// `(1/2) (t ln t - (t + 1) ln((t + 1)/2))`, the symmetrized information
/// divergence against the midpoint mixture.
pub fn make_jensen_shannon() -> Generator {
    Generator {
        name: "js".into(),
        eval: Arc::new(|t: f64| 0.5 * (t * t.ln() - (t + 1.0) * ((t + 1.0) / 2.0).ln())),
        value_at_zero: 0.5 * std::f64::consts::LN_2,
        conjugate_at_zero: 0.5 * std::f64::consts::LN_2,
        deriv1: Some(Arc::new(|t: f64| 0.5 * (2.0 * t / (t + 1.0)).ln())),
        deriv2: Some(Arc::new(|t: f64| 0.5 / (t * (t + 1.0)))),
    }
}

/// Conjugate transform `f*(t) = t f(1/t)`.
///
/// Swaps the stored limits and, when the source carries closed-form
/// derivatives, rewrites them through the chain rule:
/// `(f*)'(t) = f(1/t) - f'(1/t)/t` and `(f*)''(t) = f''(1/t)/t^3`.
pub fn conjugate(g: &Generator) -> Generator {
    let name = format!("conj({})", g.name);
    let base = g.eval.clone();
    let eval: EvalFn = Arc::new(move |t: f64| t * base(t.recip()));
    let deriv1 = match &g.deriv1 {
        Some(d1) => {
            let f = g.eval.clone();
            let d1 = d1.clone();
            Some(Arc::new(move |t: f64| {
                let u = t.recip();
                f(u) - d1(u) * u
            }) as EvalFn)
        }
        None => None,
    };
    let deriv2 = match &g.deriv2 {
        Some(d2) => {
            let d2 = d2.clone();
            Some(Arc::new(move |t: f64| d2(t.recip()) / (t * t * t)) as EvalFn)
        }
        None => None,
    };
    Generator {
        name,
        eval,
        value_at_zero: g.conjugate_at_zero,
        conjugate_at_zero: g.value_at_zero,
        deriv1,
        deriv2,
    }
}

/// Parse failure for a generator spec string, reported with the byte offset
/// of the offending token.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum SpecParseError {
    #[error("unknown generator name at byte {offset}: {name:?}")]
    UnknownName { offset: usize, name: String },
    #[error("malformed power parameter at byte {offset}: {text:?}")]
    MalformedParameter { offset: usize, text: String },
    #[error("unbalanced conjugation at byte {offset}")]
    UnbalancedConjugation { offset: usize },
}

/// Resolve a spec string to a catalog generator.
///
/// Grammar: `spec := atom | "conj(" spec ")"` with atoms
/// `power:NUMBER | tv | kl | rkl | hellinger | chi2 | lecam | js`.
/// Names are case-sensitive; `kl`, `rkl`, `hellinger` and `chi2` are aliases
/// for powers 1, 0, 0.5 and 2.
pub fn parse_spec(s: &str) -> Result<Generator, SpecParseError> {
    parse_at(s, 0)
}

fn parse_at(s: &str, base: usize) -> Result<Generator, SpecParseError> {
    if let Some(rest) = s.strip_prefix("conj(") {
        if !rest.ends_with(')') {
            return Err(SpecParseError::UnbalancedConjugation {
                offset: base + s.len(),
            });
        }
        let inner = &rest[..rest.len() - 1];
        return Ok(conjugate(&parse_at(inner, base + 5)?));
    }
    if let Some(num) = s.strip_prefix("power:") {
        let alpha: f64 = num
            .parse()
            .map_err(|_| SpecParseError::MalformedParameter {
                offset: base + 6,
                text: num.to_string(),
            })?;
        if !alpha.is_finite() {
            return Err(SpecParseError::MalformedParameter {
                offset: base + 6,
                text: num.to_string(),
            });
        }
        return Ok(make_power(alpha));
    }
    match s {
        "tv" => Ok(make_total_variation()),
        "kl" => Ok(make_power(1.0)),
        "rkl" => Ok(make_power(0.0)),
        "hellinger" => Ok(make_power(0.5)),
        "chi2" => Ok(make_power(2.0)),
        "lecam" => Ok(make_lecam()),
        "js" => Ok(make_jensen_shannon()),
        _ => Err(SpecParseError::UnknownName {
            offset: base,
            name: s.to_string(),
        }),
    }
}

/// The named catalog entries, used by validation sweeps.
pub fn catalog() -> Vec<Generator> {
    vec![
        make_total_variation(),
        make_power(1.0),
        make_power(0.0),
        make_power(0.5),
        make_power(2.0),
        make_power(3.0),
        make_power(-1.0),
        make_lecam(),
        make_jensen_shannon(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Log-spaced grid over [1e-6, 1e6].
    fn log_grid(per_decade: usize) -> Vec<f64> {
        let n = 12 * per_decade;
        (0..=n)
            .map(|i| 10f64.powf(-6.0 + 12.0 * i as f64 / n as f64))
            .collect()
    }

    #[test]
    fn power_examples() {
        assert_eq!(make_power(2.0).eval(3.0), 2.0);
        for a in [-1.0, 0.0, 0.5, 1.0, 2.0, 3.0, 1.7] {
            assert_eq!(make_power(a).eval(1.0), 0.0, "alpha={a}");
        }
        assert_eq!(make_power(2.0).value_at_zero(), 0.5);
        assert_eq!(make_power(0.5).value_at_zero(), 2.0);
        assert_eq!(make_power(0.5).conjugate_at_zero(), 2.0);
        assert!(make_power(0.0).value_at_zero().is_infinite());
        assert!(make_power(1.0).conjugate_at_zero().is_infinite());
    }

    // Stored limits must match the numeric trend of eval near the ends.
    #[test]
    fn stored_limits_match_numeric_trend() {
        for g in catalog() {
            let near: Vec<f64> = (8..=12).map(|k| g.eval(10f64.powi(-k))).collect();
            if g.value_at_zero().is_infinite() {
                // growth check rather than a threshold: logarithmic blow-ups
                // stay small on any finite sample
                assert!(
                    near.windows(2).all(|w| w[1] >= w[0]) && near[4] > 1.2 * near[0] && near[4] > 10.0,
                    "{}: f(0) stored as inf but tail is {near:?}",
                    g.name()
                );
            } else {
                assert_abs_diff_eq!(near[4], g.value_at_zero(), epsilon = 1e-5);
            }
            let far: Vec<f64> = (8..=12)
                .map(|k| g.eval(10f64.powi(k)) / 10f64.powi(k))
                .collect();
            if g.conjugate_at_zero().is_infinite() {
                assert!(
                    far.windows(2).all(|w| w[1] >= w[0]) && far[4] > 1.2 * far[0] && far[4] > 10.0,
                    "{}: f*(0) stored as inf but tail is {far:?}",
                    g.name()
                );
            } else {
                assert_abs_diff_eq!(far[4], g.conjugate_at_zero(), epsilon = 1e-5);
            }
        }
    }

    #[test]
    fn power_limit_examples() {
        // phi_1 tends to 1 at zero, phi_0 blows up.
        assert_eq!(make_power(1.0).value_at_zero(), 1.0);
        assert_abs_diff_eq!(make_power(1.0).eval(1e-12), 1.0, epsilon = 1e-10);
        assert!(make_power(0.0).value_at_zero().is_infinite());
        assert!(make_power(0.0).eval(1e-12) > 20.0);
    }

    #[test]
    fn total_variation_examples() {
        let tv = make_total_variation();
        assert_eq!(tv.eval(0.5), 0.5);
        assert_eq!(tv.eval(1.0), 0.0);
        // numeric limit of |t-1|/t
        assert_abs_diff_eq!(tv.eval(1e12) / 1e12, tv.conjugate_at_zero(), epsilon = 1e-9);
    }

    #[test]
    fn midpoint_convexity_on_log_grid() {
        for g in catalog() {
            let grid = log_grid(3);
            for (i, &t1) in grid.iter().enumerate() {
                for &t2 in &grid[i..] {
                    let (a, b) = (g.eval(t1), g.eval(t2));
                    if !a.is_finite() || !b.is_finite() {
                        continue;
                    }
                    let mid = g.eval(0.5 * (t1 + t2));
                    let tol = 1e-12 * f64::max(1.0, a.abs() + b.abs());
                    assert!(
                        mid <= 0.5 * (a + b) + tol,
                        "{} not midpoint convex at ({t1}, {t2})",
                        g.name()
                    );
                }
            }
        }
    }

    #[test]
    fn conjugate_is_involution() {
        for g in catalog() {
            let cc = conjugate(&conjugate(&g));
            for t in log_grid(2) {
                let (a, b) = (g.eval(t), cc.eval(t));
                if a.is_infinite() {
                    assert!(b.is_infinite());
                } else {
                    let tol = 1e-12 * f64::max(1.0, a.abs());
                    assert!((a - b).abs() <= tol, "{} at t={t}: {a} vs {b}", g.name());
                }
            }
            assert_eq!(cc.value_at_zero(), g.value_at_zero());
            assert_eq!(cc.conjugate_at_zero(), g.conjugate_at_zero());
        }
    }

    #[test]
    fn conjugate_power_is_reflected_order() {
        for a in [-1.0, 0.0, 0.5, 1.0, 2.0, 3.0] {
            let lhs = conjugate(&make_power(a));
            let rhs = make_power(1.0 - a);
            for t in [0.1, 0.5, 2.0, 10.0, 1e-4, 1e4] {
                let (x, y) = (lhs.eval(t), rhs.eval(t));
                let tol = 1e-10 * f64::max(1.0, y.abs());
                assert!((x - y).abs() <= tol, "alpha={a}, t={t}: {x} vs {y}");
            }
            assert_eq!(lhs.value_at_zero(), rhs.value_at_zero());
            assert_eq!(lhs.conjugate_at_zero(), rhs.conjugate_at_zero());
        }
    }

    #[test]
    fn conjugate_total_variation_is_itself() {
        let c = conjugate(&make_total_variation());
        for t in [0.1, 0.5, 2.0, 10.0] {
            assert_abs_diff_eq!(c.eval(t), (t - 1.0f64).abs(), epsilon = 1e-14);
        }
    }

    #[test]
    fn conjugate_derivatives_follow_chain_rule() {
        let g = make_power(2.0);
        let c = conjugate(&g);
        for t in [0.3, 0.9, 2.5] {
            let h = 1e-6;
            let fd = (c.eval(t + h) - c.eval(t - h)) / (2.0 * h);
            assert_abs_diff_eq!(c.deriv1(t).unwrap(), fd, epsilon = 1e-7);
            let fd2 = (c.eval(t + h) - 2.0 * c.eval(t) + c.eval(t - h)) / (h * h);
            assert_abs_diff_eq!(c.deriv2(t).unwrap(), fd2, epsilon = 1e-3);
        }
    }

    #[test]
    fn closed_form_derivatives_match_finite_differences() {
        for g in catalog() {
            if !g.has_deriv1() || g.name() == "tv" {
                continue;
            }
            for t in [0.2, 0.7, 1.5, 4.0] {
                let h = 1e-6;
                let fd = (g.eval(t + h) - g.eval(t - h)) / (2.0 * h);
                assert_abs_diff_eq!(g.deriv1(t).unwrap(), fd, epsilon = 1e-6);
            }
        }
    }

    // Ground truth for the symmetrized closed forms: evaluate the defining
    // mixtures with plain chi-square / information divergence sums.
    fn chi2_sum(p: &[f64], q: &[f64]) -> f64 {
        p.iter()
            .zip(q)
            .map(|(&a, &b)| 0.5 * (a - b) * (a - b) / b)
            .sum()
    }

    fn kl_sum(p: &[f64], q: &[f64]) -> f64 {
        p.iter()
            .zip(q)
            .map(|(&a, &b)| if a == 0.0 { 0.0 } else { a * (a / b).ln() })
            .sum()
    }

    #[test]
    fn lecam_matches_symmetrization_oracle() {
        let g = make_lecam();
        assert_eq!(g.eval(1.0), 0.0);
        assert_eq!(g.eval(3.0), 0.25);
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..1000 {
            let (a, b) = (0.001 + 0.998 * next(), 0.001 + 0.998 * next());
            let p = [a, 1.0 - a];
            let q = [b, 1.0 - b];
            let m = [0.5 * (a + b), 0.5 * (2.0 - a - b)];
            let oracle = 0.5 * chi2_sum(&p, &m) + 0.5 * chi2_sum(&q, &m);
            let closed: f64 = q.iter().zip(&p).map(|(&qj, &pj)| qj * g.eval(pj / qj)).sum();
            assert!((oracle - closed).abs() < 1e-10, "p={p:?} q={q:?}");
        }
    }

    #[test]
    fn jensen_shannon_matches_symmetrization_oracle() {
        let g = make_jensen_shannon();
        assert_eq!(g.eval(1.0), 0.0);
        assert_abs_diff_eq!(g.value_at_zero(), 0.34657359027997264, epsilon = 1e-15);
        let mut state = 0x2545f4914f6cdd1du64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..1000 {
            let (a, b) = (0.001 + 0.998 * next(), 0.001 + 0.998 * next());
            let p = [a, 1.0 - a];
            let q = [b, 1.0 - b];
            let m = [0.5 * (a + b), 0.5 * (2.0 - a - b)];
            let oracle = 0.5 * kl_sum(&p, &m) + 0.5 * kl_sum(&q, &m);
            let closed: f64 = q.iter().zip(&p).map(|(&qj, &pj)| qj * g.eval(pj / qj)).sum();
            assert!((oracle - closed).abs() < 1e-10, "p={p:?} q={q:?}");
        }
    }

    #[test]
    fn parse_spec_catalog_and_aliases() {
        assert_eq!(parse_spec("power:2").unwrap().name(), "power:2");
        assert_eq!(parse_spec("chi2").unwrap().eval(3.0), 2.0);
        assert_eq!(parse_spec("tv").unwrap().eval(0.5), 0.5);
        // conj(power:1) equals power:0 pointwise
        let c = parse_spec("conj(power:1)").unwrap();
        let r = make_power(0.0);
        for t in [0.1, 0.5, 2.0, 10.0] {
            assert_abs_diff_eq!(c.eval(t), r.eval(t), epsilon = 1e-12);
        }
        let nested = parse_spec("conj(conj(power:2))").unwrap();
        assert_abs_diff_eq!(nested.eval(3.0), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn parse_spec_errors_carry_offsets() {
        assert_eq!(
            parse_spec("frobnicate").unwrap_err(),
            SpecParseError::UnknownName {
                offset: 0,
                name: "frobnicate".into()
            }
        );
        assert_eq!(
            parse_spec("power:zz").unwrap_err(),
            SpecParseError::MalformedParameter {
                offset: 6,
                text: "zz".into()
            }
        );
        assert_eq!(
            parse_spec("conj(tv").unwrap_err(),
            SpecParseError::UnbalancedConjugation { offset: 7 }
        );
        assert_eq!(
            parse_spec("conj(conj(tv)").unwrap_err(),
            SpecParseError::UnbalancedConjugation { offset: 12 }
        );
        assert_eq!(
            parse_spec("conj(oops)").unwrap_err(),
            SpecParseError::UnknownName {
                offset: 5,
                name: "oops".into()
            }
        );
    }
}
