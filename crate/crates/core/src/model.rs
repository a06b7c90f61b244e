//! Game instances: effort regimes, costs, switching costs and reward schemes.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rank-based reward `R : [0,1] -> [0, inf)`, paid on arrival as a function
/// of the fraction of the population that arrived earlier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "lowercase", deny_unknown_fields)]
pub enum RewardScheme {
    /// `R(x) = a - b x`.
    Linear { a: f64, b: f64 },
    /// `R(x) = a (1 - x)^p`, `p >= 1`.
    Power { a: f64, p: f64 },
    /// Piecewise-linear through `knots` (`x` ascending from 0 to 1).
    Table { knots: Vec<[f64; 2]> },
}

impl RewardScheme {
    /// `R(x)`; fails outside `[0, 1]`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain(format!("reward argument {x} outside [0, 1]")));
        }
        Ok(self.value(x))
    }

    /// `R(x)` with `x` clamped to `[0, 1]`, for hot loops where `x` is a
    /// progress value that may overshoot 1 by rounding.
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        match self {
            RewardScheme::Linear { a, b } => a - b * x,
            RewardScheme::Power { a, p } => {
                if *p == 2.0 {
                    let y = 1.0 - x;
                    a * y * y
                } else {
                    a * (1.0 - x).powf(*p)
                }
            }
            RewardScheme::Table { knots } => {
                let pos = knots.partition_point(|k| k[0] < x);
                if pos == 0 {
                    return knots[0][1];
                }
                if pos >= knots.len() {
                    return knots[knots.len() - 1][1];
                }
                let [x0, y0] = knots[pos - 1];
                let [x1, y1] = knots[pos];
                if x1 == x0 {
                    y1
                } else {
                    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
                }
            }
        }
    }

    /// Lipschitz constant `r` on `[0, 1]`.
    pub fn lipschitz(&self) -> f64 {
        match self {
            RewardScheme::Linear { b, .. } => b.abs(),
            RewardScheme::Power { a, p } => (a * p).abs(),
            RewardScheme::Table { knots } => knots
                .windows(2)
                .filter(|w| w[1][0] > w[0][0])
                .map(|w| ((w[1][1] - w[0][1]) / (w[1][0] - w[0][0])).abs())
                .fold(0.0, f64::max),
        }
    }

    pub fn is_convex(&self) -> bool {
        match self {
            RewardScheme::Linear { .. } => true,
            RewardScheme::Power { p, .. } => *p >= 1.0,
            RewardScheme::Table { knots } => {
                let slopes: Vec<f64> = knots
                    .windows(2)
                    .filter(|w| w[1][0] > w[0][0])
                    .map(|w| (w[1][1] - w[0][1]) / (w[1][0] - w[0][0]))
                    .collect();
                slopes.windows(2).all(|s| s[1] >= s[0])
            }
        }
    }

    /// Piecewise-linear and affine schemes are never strictly convex.
    pub fn is_strictly_convex(&self) -> bool {
        match self {
            RewardScheme::Power { a, p } => *p > 1.0 && *a > 0.0,
            _ => false,
        }
    }

    fn check(&self, out: &mut Vec<Violation>) {
        let mut push = |message: String| {
            out.push(Violation {
                kind: ViolationKind::Reward,
                indices: Vec::new(),
                message,
            })
        };
        match self {
            RewardScheme::Linear { a, b } => {
                if !(a.is_finite() && b.is_finite()) {
                    push("linear reward parameters must be finite".into());
                } else {
                    if *b < 0.0 {
                        push(format!("linear reward must be decreasing (b = {b} < 0)"));
                    }
                    if a - b < 0.0 {
                        push(format!("reward must be non-negative: R(1) = {} < 0", a - b));
                    }
                }
            }
            RewardScheme::Power { a, p } => {
                if !(a.is_finite() && p.is_finite()) {
                    push("power reward parameters must be finite".into());
                } else {
                    if *a < 0.0 {
                        push(format!("power reward scale a = {a} must be non-negative"));
                    }
                    if *p < 1.0 {
                        push(format!("power reward exponent p = {p} must be >= 1"));
                    }
                }
            }
            RewardScheme::Table { knots } => {
                if knots.len() < 2 {
                    push("table reward needs at least two knots".into());
                    return;
                }
                if knots.iter().flatten().any(|v| !v.is_finite()) {
                    push("table reward knots must be finite".into());
                    return;
                }
                if knots[0][0] != 0.0 || knots[knots.len() - 1][0] != 1.0 {
                    push("table reward knots must span [0, 1] exactly".into());
                }
                if knots.windows(2).any(|w| w[1][0] <= w[0][0]) {
                    push("table reward knot abscissae must be strictly increasing".into());
                }
                if knots.windows(2).any(|w| w[1][1] > w[0][1]) {
                    push("table reward must be decreasing".into());
                }
                if knots.iter().any(|k| k[1] < 0.0) {
                    push("table reward must be non-negative".into());
                }
            }
        }
    }
}

/// A full game instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    /// Effort intensities `u_k` (arrival rates).
    pub efforts: Vec<f64>,
    /// Running cost per unit time in each regime.
    pub costs: Vec<f64>,
    /// Row-major `K x K` switching costs, `g[k*K + j]` for `k -> j`.
    pub switching_costs: Vec<f64>,
    pub reward: RewardScheme,
}

impl ModelSpec {
    /// Builds an instance, checking only shapes. Use [`validate_model`] for
    /// the modelling assumptions.
    pub fn new(
        efforts: Vec<f64>,
        costs: Vec<f64>,
        switching_costs: Vec<Vec<f64>>,
        reward: RewardScheme,
    ) -> Result<Self> {
        let k = efforts.len();
        if k == 0 {
            return Err(Error::Config("at least one effort regime is required".into()));
        }
        if costs.len() != k {
            return Err(Error::Config(format!("{} costs for {k} regimes", costs.len())));
        }
        if switching_costs.len() != k || switching_costs.iter().any(|row| row.len() != k) {
            return Err(Error::Config(format!("switching costs must be a {k}x{k} matrix")));
        }
        Ok(Self {
            efforts,
            costs,
            switching_costs: switching_costs.into_iter().flatten().collect(),
            reward,
        })
    }

    #[inline]
    pub fn regimes(&self) -> usize {
        self.efforts.len()
    }

    #[inline]
    pub fn switching_cost(&self, from: usize, to: usize) -> f64 {
        self.switching_costs[from * self.regimes() + to]
    }

    pub fn u_min(&self) -> f64 {
        self.efforts.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn u_max(&self) -> f64 {
        self.efforts.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_cost(&self) -> f64 {
        self.costs.iter().copied().fold(0.0, f64::max)
    }

    /// Index of the slowest regime (smallest index on ties).
    pub fn slowest_regime(&self) -> usize {
        let u = self.u_min();
        self.efforts.iter().position(|&x| x == u).unwrap_or(0)
    }

    /// Lower bound `-max_k c_k / u_min` for every value function.
    pub fn value_lower_bound(&self) -> f64 {
        -self.max_cost() / self.u_min()
    }

    /// Upper bound `R(0) + eta K max_{k != j} e^{-g_kj/eta} / u_min` for the
    /// regularized value function (`R(0)` when `eta = 0`).
    pub fn value_upper_bound(&self, eta: f64) -> f64 {
        let k = self.regimes();
        let mut bonus = 0.0;
        if eta > 0.0 && k > 1 {
            let g_min = (0..k)
                .flat_map(|a| (0..k).filter(move |&b| b != a).map(move |b| (a, b)))
                .map(|(a, b)| self.switching_cost(a, b))
                .fold(f64::INFINITY, f64::min);
            bonus = eta * k as f64 * (-g_min / eta).exp() / self.u_min();
        }
        self.reward.value(0.0) + bonus
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Shape,
    NonFinite,
    ZeroEffort,
    NegativeCost,
    SwitchingDiagonal,
    SwitchingPositivity,
    TriangleInequality,
    Reward,
}

/// One failed invariant. `indices` are 1-based regime indices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub indices: Vec<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Advisory notes that do not fail validation.
    pub notes: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed() {
            writeln!(f, "model valid")?;
        } else {
            writeln!(f, "model invalid ({} violation(s)):", self.violations.len())?;
            for v in &self.violations {
                writeln!(f, "  - {v}")?;
            }
        }
        for n in &self.notes {
            writeln!(f, "  note: {n}")?;
        }
        Ok(())
    }
}

/// Checks every modelling assumption and lists the violations. Never fails.
pub fn validate_model(spec: &ModelSpec) -> ValidationReport {
    let mut report = ValidationReport::default();
    let k = spec.regimes();
    let v = &mut report.violations;

    if k == 0 || spec.costs.len() != k || spec.switching_costs.len() != k * k {
        v.push(Violation {
            kind: ViolationKind::Shape,
            indices: Vec::new(),
            message: "inconsistent dimensions between efforts, costs and switching costs".into(),
        });
        return report;
    }

    for (i, &u) in spec.efforts.iter().enumerate() {
        if !u.is_finite() {
            v.push(Violation {
                kind: ViolationKind::NonFinite,
                indices: vec![i + 1],
                message: format!("effort u_{} is not finite", i + 1),
            });
        } else if u <= 0.0 {
            v.push(Violation {
                kind: ViolationKind::ZeroEffort,
                indices: vec![i + 1],
                message: format!("effort u_{} = {u} must be positive (0 ∉ 𝕌)", i + 1),
            });
        }
    }
    for (i, &c) in spec.costs.iter().enumerate() {
        if !c.is_finite() {
            v.push(Violation {
                kind: ViolationKind::NonFinite,
                indices: vec![i + 1],
                message: format!("cost c_{} is not finite", i + 1),
            });
        } else if c < 0.0 {
            v.push(Violation {
                kind: ViolationKind::NegativeCost,
                indices: vec![i + 1],
                message: format!("running cost c_{} = {c} must be non-negative", i + 1),
            });
        }
    }

    let g = |a: usize, b: usize| spec.switching_cost(a, b);
    let mut g_finite = true;
    for a in 0..k {
        for b in 0..k {
            let x = g(a, b);
            if !x.is_finite() {
                g_finite = false;
                v.push(Violation {
                    kind: ViolationKind::NonFinite,
                    indices: vec![a + 1, b + 1],
                    message: format!("switching cost g_{},{} is not finite", a + 1, b + 1),
                });
            } else if a == b && x != 0.0 {
                v.push(Violation {
                    kind: ViolationKind::SwitchingDiagonal,
                    indices: vec![a + 1, b + 1],
                    message: format!("switching cost g_{0},{0} = {x} must be 0", a + 1),
                });
            } else if a != b && x <= 0.0 {
                v.push(Violation {
                    kind: ViolationKind::SwitchingPositivity,
                    indices: vec![a + 1, b + 1],
                    message: format!("switching cost g_{},{} = {x} must be positive", a + 1, b + 1),
                });
            }
        }
    }
    if g_finite {
        // g_jk + g_kl > g_jl for j != k != l; j == l holds trivially when the
        // off-diagonal costs are positive.
        for j in 0..k {
            for kk in 0..k {
                if kk == j {
                    continue;
                }
                for l in 0..k {
                    if l == kk || l == j {
                        continue;
                    }
                    if !(g(j, kk) + g(kk, l) > g(j, l)) {
                        v.push(Violation {
                            kind: ViolationKind::TriangleInequality,
                            indices: vec![j + 1, kk + 1, l + 1],
                            message: format!(
                                "strict triangle inequality fails at ({},{},{}): g_{},{} + g_{},{} = {} <= g_{},{} = {}",
                                j + 1,
                                kk + 1,
                                l + 1,
                                j + 1,
                                kk + 1,
                                kk + 1,
                                l + 1,
                                g(j, kk) + g(kk, l),
                                j + 1,
                                l + 1,
                                g(j, l)
                            ),
                        });
                    }
                }
            }
        }
    }

    spec.reward.check(v);

    if !spec.reward.is_convex() {
        report
            .notes
            .push("reward scheme is not convex: equilibrium uniqueness is not guaranteed".into());
    }
    report
}
