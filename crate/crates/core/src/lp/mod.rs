//! Linear programming with two interchangeable engines: a floating-point
//! simplex whose answers are residual-checked, and an exact simplex over
//! arbitrary-precision rationals.

mod exact;
mod simplex;

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::sync::atomic::{AtomicU8, Ordering};

use simplex::{Field, StandardLp};

pub use exact::Rational;

/// Residual tolerance for accepting a floating-point solution.
pub const RESIDUAL_TOL: f64 = 1e-9;

/// Problems at most this large are re-solved exactly when the float
/// engine's answer fails verification.
const EXACT_FALLBACK_CELLS: usize = 6_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LpEngine {
    Float,
    Exact,
}

impl LpEngine {
    pub fn name(self) -> &'static str {
        match self {
            LpEngine::Float => "float",
            LpEngine::Exact => "exact",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "float" => Some(LpEngine::Float),
            "exact" => Some(LpEngine::Exact),
            _ => None,
        }
    }
}

static DEFAULT_ENGINE: AtomicU8 = AtomicU8::new(0);

/// Engine used by operations that do not take one explicitly.
pub fn default_engine() -> LpEngine {
    match DEFAULT_ENGINE.load(Ordering::Relaxed) {
        1 => LpEngine::Exact,
        _ => LpEngine::Float,
    }
}

pub fn set_default_engine(e: LpEngine) {
    DEFAULT_ENGINE.store(
        match e {
            LpEngine::Float => 0,
            LpEngine::Exact => 1,
        },
        Ordering::Relaxed,
    );
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rel {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpError {
    Infeasible,
    Unbounded,
    IterationLimit,
    /// The float engine's solution violates the constraints and the problem
    /// is too large for the exact fallback.
    Inaccurate,
}

impl fmt::Display for LpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LpError::Infeasible => write!(f, "infeasible"),
            LpError::Unbounded => write!(f, "unbounded"),
            LpError::IterationLimit => write!(f, "iteration limit reached"),
            LpError::Inaccurate => write!(f, "solution failed residual verification"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub value: f64,
    pub x: Vec<f64>,
}

/// A linear program over variables that are free unless marked
/// nonnegative.
#[derive(Clone, Debug)]
pub struct Lp {
    n: usize,
    nonneg: Vec<bool>,
    objective: Vec<f64>,
    maximize: bool,
    rows: Vec<(Vec<f64>, Rel, f64)>,
}

impl Lp {
    /// `n` free variables, objective zero.
    pub fn new(n: usize) -> Self {
        Lp { n, nonneg: vec![false; n], objective: vec![0.0; n], maximize: true, rows: Vec::new() }
    }

    pub fn vars(&self) -> usize {
        self.n
    }

    pub fn constraints(&self) -> usize {
        self.rows.len()
    }

    /// Appends a variable and returns its index.
    pub fn add_var(&mut self, nonneg: bool) -> usize {
        self.n += 1;
        self.nonneg.push(nonneg);
        self.objective.push(0.0);
        for r in &mut self.rows {
            r.0.push(0.0);
        }
        self.n - 1
    }

    pub fn set_nonneg(&mut self, j: usize) {
        self.nonneg[j] = true;
    }

    pub fn maximize(&mut self, c: Vec<f64>) {
        assert_eq!(c.len(), self.n);
        self.objective = c;
        self.maximize = true;
    }

    pub fn minimize(&mut self, c: Vec<f64>) {
        assert_eq!(c.len(), self.n);
        self.objective = c;
        self.maximize = false;
    }

    pub fn add(&mut self, coeffs: Vec<f64>, rel: Rel, rhs: f64) {
        assert_eq!(coeffs.len(), self.n);
        self.rows.push((coeffs, rel, rhs));
    }

    /// Adds `coeffs · x` bounded by `rhs` in absolute value.
    pub fn add_abs_le(&mut self, coeffs: Vec<f64>, rhs: f64) {
        self.add(coeffs.clone(), Rel::Le, rhs);
        self.add(coeffs, Rel::Ge, -rhs);
    }

    pub fn solve(&self) -> Result<Solution, LpError> {
        self.solve_with(default_engine())
    }

    pub fn solve_with(&self, engine: LpEngine) -> Result<Solution, LpError> {
        match engine {
            LpEngine::Exact => self.solve_exact(),
            LpEngine::Float => {
                let cells = (self.rows.len() + 1) * (2 * self.n + 2 * self.rows.len() + 1);
                match self.solve_generic::<f64>() {
                    Ok(sol) if self.residual(&sol.x) <= RESIDUAL_TOL => Ok(sol),
                    Ok(_) if cells <= EXACT_FALLBACK_CELLS => self.solve_exact(),
                    Ok(_) => Err(LpError::Inaccurate),
                    Err(LpError::Unbounded) => Err(LpError::Unbounded),
                    Err(_) if cells <= EXACT_FALLBACK_CELLS => self.solve_exact(),
                    Err(e) => Err(e),
                }
            }
        }
    }

    fn solve_exact(&self) -> Result<Solution, LpError> {
        self.solve_generic::<Rational>()
    }

    /// Largest constraint violation of `x`, scaled by the row size.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, &v) in x.iter().enumerate() {
            if self.nonneg[j] && v < 0.0 {
                worst = worst.max(-v);
            }
        }
        for (a, rel, b) in &self.rows {
            let lhs: f64 = a.iter().zip(x).map(|(p, q)| p * q).sum();
            let scale = 1.0 + b.abs();
            let viol = match rel {
                Rel::Le => (lhs - b).max(0.0),
                Rel::Ge => (b - lhs).max(0.0),
                Rel::Eq => (lhs - b).abs(),
            };
            worst = worst.max(viol / scale);
        }
        worst
    }

    fn solve_generic<T: Field>(&self) -> Result<Solution, LpError> {
        // Free variables are split as x = x⁺ − x⁻.
        let mut col_of = Vec::with_capacity(self.n);
        let mut width = 0;
        for j in 0..self.n {
            col_of.push(width);
            width += if self.nonneg[j] { 1 } else { 2 };
        }
        let expand = |coeffs: &[f64]| -> Vec<T> {
            let mut out = vec![T::zero(); width];
            for j in 0..self.n {
                let v = T::from_f64(coeffs[j]);
                if !self.nonneg[j] {
                    out[col_of[j] + 1] = v.neg();
                }
                out[col_of[j]] = v;
            }
            out
        };
        let sign = if self.maximize { 1.0 } else { -1.0 };
        let objective: Vec<f64> = self.objective.iter().map(|c| sign * c).collect();
        let std = StandardLp {
            n: width,
            objective: expand(&objective),
            rows: self.rows.iter().map(|(a, rel, b)| (expand(a), *rel, T::from_f64(*b))).collect(),
        };
        let sol = simplex::solve(&std)?;
        let x: Vec<f64> = (0..self.n)
            .map(|j| {
                let p = &sol.x[col_of[j]];
                if self.nonneg[j] {
                    p.to_f64()
                } else {
                    p.sub(&sol.x[col_of[j] + 1]).to_f64()
                }
            })
            .collect();
        Ok(Solution { value: sign * sol.value.to_f64(), x })
    }
}

impl Field for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn is_pos(&self) -> bool {
        *self > 1e-11
    }
    fn is_neg(&self) -> bool {
        *self < -1e-11
    }
    fn is_exact_zero(&self) -> bool {
        *self == 0.0
    }
    fn lt(&self, o: &Self) -> bool {
        self < o
    }
    fn pivotable(&self) -> bool {
        *self > 1e-9
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn both(lp: &Lp) -> (Solution, Solution) {
        (lp.solve_with(LpEngine::Float).unwrap(), lp.solve_with(LpEngine::Exact).unwrap())
    }

    #[test]
    fn textbook_maximum() {
        // max 3x + 5y, x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18, x, y ≥ 0 → 36 at (2, 6)
        let mut lp = Lp::new(2);
        lp.set_nonneg(0);
        lp.set_nonneg(1);
        lp.maximize(vec![3.0, 5.0]);
        lp.add(vec![1.0, 0.0], Rel::Le, 4.0);
        lp.add(vec![0.0, 2.0], Rel::Le, 12.0);
        lp.add(vec![3.0, 2.0], Rel::Le, 18.0);
        let (f, e) = both(&lp);
        assert!((f.value - 36.0).abs() < 1e-12);
        assert_eq!(e.value, 36.0);
        assert_eq!(e.x, vec![2.0, 6.0]);
    }

    #[test]
    fn free_variables_and_equalities() {
        // min |x| + |y| as t-variables, subject to x + y = 1, x - y = 3
        let mut lp = Lp::new(2);
        lp.minimize(vec![1.0, 1.0]);
        lp.add(vec![1.0, 1.0], Rel::Eq, 1.0);
        lp.add(vec![1.0, -1.0], Rel::Eq, 3.0);
        let (f, e) = both(&lp);
        assert!((f.value - 1.0).abs() < 1e-12);
        assert_eq!(e.x, vec![2.0, -1.0]);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = Lp::new(1);
        lp.add(vec![1.0], Rel::Ge, 2.0);
        lp.add(vec![1.0], Rel::Le, 1.0);
        assert_eq!(lp.solve_with(LpEngine::Float).unwrap_err(), LpError::Infeasible);
        assert_eq!(lp.solve_with(LpEngine::Exact).unwrap_err(), LpError::Infeasible);
        let mut lp = Lp::new(1);
        lp.maximize(vec![1.0]);
        lp.add(vec![1.0], Rel::Ge, 0.0);
        assert_eq!(lp.solve_with(LpEngine::Exact).unwrap_err(), LpError::Unbounded);
    }

    #[test]
    fn degenerate_problem_terminates() {
        // A classic cycling example under the largest-coefficient rule.
        let mut lp = Lp::new(4);
        for j in 0..4 {
            lp.set_nonneg(j);
        }
        lp.maximize(vec![0.75, -20.0, 0.5, -6.0]);
        lp.add(vec![0.25, -8.0, -1.0, 9.0], Rel::Le, 0.0);
        lp.add(vec![0.5, -12.0, -0.5, 3.0], Rel::Le, 0.0);
        lp.add(vec![0.0, 0.0, 1.0, 0.0], Rel::Le, 1.0);
        let (f, e) = both(&lp);
        assert!((f.value - 1.25).abs() < 1e-12);
        assert_eq!(e.value, 1.25);
    }

    #[test]
    fn redundant_equalities_are_dropped() {
        let mut lp = Lp::new(2);
        lp.maximize(vec![1.0, 0.0]);
        lp.add(vec![1.0, 1.0], Rel::Eq, 1.0);
        lp.add(vec![2.0, 2.0], Rel::Eq, 2.0);
        lp.add(vec![0.0, 1.0], Rel::Ge, 0.0);
        let (f, e) = both(&lp);
        assert!((f.value - 1.0).abs() < 1e-12);
        assert_eq!(e.value, 1.0);
    }
}
