//! Dense two-phase tableau simplex, generic over the scalar field.
//!
//! Variables are nonnegative; the caller splits free variables. Bland's
//! rule is used whenever the objective stalls, which rules out cycling.

use alloc::vec;
use alloc::vec::Vec;

use super::{LpError, Rel};

pub trait Field: Clone {
    fn zero() -> Self;
    fn one() -> Self;
    fn from_f64(x: f64) -> Self;
    fn to_f64(&self) -> f64;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    /// Strictly positive beyond the engine's tolerance.
    fn is_pos(&self) -> bool;
    fn is_neg(&self) -> bool;
    fn is_zero(&self) -> bool {
        !self.is_pos() && !self.is_neg()
    }
    fn is_exact_zero(&self) -> bool;
    fn lt(&self, o: &Self) -> bool;
    /// Whether the tableau entry is large enough to pivot on.
    fn pivotable(&self) -> bool {
        self.is_pos()
    }
}

pub(crate) struct StandardLp<T> {
    pub n: usize,
    pub objective: Vec<T>,
    pub rows: Vec<(Vec<T>, Rel, T)>,
}

pub(crate) struct StandardSolution<T> {
    pub value: T,
    pub x: Vec<T>,
}

struct Tableau<T> {
    /// `m` constraint rows plus the objective row last; the last column is
    /// the right-hand side.
    t: Vec<Vec<T>>,
    basis: Vec<usize>,
    width: usize,
}

impl<T: Field> Tableau<T> {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[r][c].clone();
        let row: Vec<T> = self.t[r].iter().map(|v| v.div(&p)).collect();
        for (i, other) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = other[c].clone();
            if f.is_exact_zero() {
                continue;
            }
            for (o, v) in other.iter_mut().zip(&row) {
                *o = o.sub(&f.mul(v));
            }
            other[c] = T::zero();
        }
        self.t[r] = row;
        self.basis[r] = c;
    }

    /// Maximizes the objective row (stored as reduced costs `z_j - c_j`)
    /// over columns allowed by `allowed`.
    fn optimize(&mut self, allowed: &[bool]) -> Result<(), LpError> {
        let m = self.basis.len();
        let rhs = self.width;
        let mut stall = 0usize;
        let mut iterations = 0usize;
        let limit = 50_000 + 200 * (m + self.width);
        loop {
            iterations += 1;
            if iterations > limit {
                return Err(LpError::IterationLimit);
            }
            let obj = &self.t[m];
            let bland = stall > 20;
            let mut enter = None;
            for j in 0..self.width {
                if !allowed[j] || !obj[j].is_neg() {
                    continue;
                }
                match enter {
                    None => enter = Some(j),
                    Some(e) if !bland && obj[j].lt(&obj[e]) => enter = Some(j),
                    _ => {}
                }
                if bland {
                    break;
                }
            }
            let Some(c) = enter else { return Ok(()) };
            let mut leave: Option<(usize, T)> = None;
            for i in 0..m {
                let a = &self.t[i][c];
                if !a.pivotable() {
                    continue;
                }
                let ratio = self.t[i][rhs].div(a);
                match &leave {
                    None => leave = Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio.lt(lr) {
                            leave = Some((i, ratio));
                        } else if !lr.lt(&ratio) && self.basis[i] < self.basis[*li] {
                            leave = Some((i, ratio));
                        }
                    }
                }
            }
            let Some((r, ratio)) = leave else { return Err(LpError::Unbounded) };
            if ratio.is_zero() {
                stall += 1;
            } else {
                stall = 0;
            }
            self.pivot(r, c);
        }
    }
}

/// Maximizes `objective · x` subject to the rows and `x ≥ 0`.
pub(crate) fn solve<T: Field>(lp: &StandardLp<T>) -> Result<StandardSolution<T>, LpError> {
    let n = lp.n;
    let m = lp.rows.len();
    // Normalize to nonnegative right-hand sides.
    let mut rows: Vec<(Vec<T>, Rel, T)> = Vec::with_capacity(m);
    for (a, rel, b) in &lp.rows {
        if b.is_neg() {
            let rel = match rel {
                Rel::Le => Rel::Ge,
                Rel::Ge => Rel::Le,
                Rel::Eq => Rel::Eq,
            };
            rows.push((a.iter().map(|v| v.neg()).collect(), rel, b.neg()));
        } else {
            rows.push((a.clone(), *rel, b.clone()));
        }
    }
    let n_slack = rows.iter().filter(|r| r.1 != Rel::Eq).count();
    let n_art = rows.iter().filter(|r| r.1 != Rel::Le).count();
    let width = n + n_slack + n_art;
    let mut t = vec![vec![T::zero(); width + 1]; m + 1];
    let mut basis = vec![0usize; m];
    let mut is_art = vec![false; width];
    let (mut s, mut a) = (n, n + n_slack);
    for (i, (coeffs, rel, b)) in rows.iter().enumerate() {
        t[i][..n].clone_from_slice(coeffs);
        t[i][width] = b.clone();
        match rel {
            Rel::Le => {
                t[i][s] = T::one();
                basis[i] = s;
                s += 1;
            }
            Rel::Ge => {
                t[i][s] = T::one().neg();
                s += 1;
                t[i][a] = T::one();
                is_art[a] = true;
                basis[i] = a;
                a += 1;
            }
            Rel::Eq => {
                t[i][a] = T::one();
                is_art[a] = true;
                basis[i] = a;
                a += 1;
            }
        }
    }
    let mut tab = Tableau { t, basis, width };

    if n_art > 0 {
        // Phase one: maximize -(sum of artificials).
        for j in 0..=width {
            let mut acc = T::zero();
            for i in 0..m {
                if is_art[tab.basis[i]] {
                    acc = acc.sub(&tab.t[i][j]);
                }
            }
            tab.t[m][j] = acc;
        }
        for j in 0..width {
            if is_art[j] {
                tab.t[m][j] = T::zero();
            }
        }
        let all = vec![true; width];
        tab.optimize(&all)?;
        if tab.t[m][width].is_neg() {
            return Err(LpError::Infeasible);
        }
        // Drive zero-level artificials out of the basis; drop redundant rows.
        let mut i = 0;
        while i < tab.basis.len() {
            if is_art[tab.basis[i]] {
                let col = (0..width).find(|&j| !is_art[j] && !tab.t[i][j].is_zero());
                match col {
                    Some(c) => tab.pivot(i, c),
                    None => {
                        tab.t.remove(i);
                        tab.basis.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
    }

    // Phase two objective row: z_j - c_j with c extended by zeros.
    let m2 = tab.basis.len();
    let mut cost = vec![T::zero(); width];
    cost[..n].clone_from_slice(&lp.objective);
    let mut obj = vec![T::zero(); width + 1];
    for j in 0..=width {
        let mut acc = if j < width { cost[j].neg() } else { T::zero() };
        for i in 0..m2 {
            let cb = &cost[tab.basis[i]];
            if !cb.is_zero() {
                acc = acc.add(&cb.mul(&tab.t[i][j]));
            }
        }
        obj[j] = acc;
    }
    tab.t[m2] = obj;
    let allowed: Vec<bool> = is_art.iter().map(|a| !a).collect();
    tab.optimize(&allowed)?;

    let mut x = vec![T::zero(); n];
    for (i, &b) in tab.basis.iter().enumerate() {
        if b < n {
            x[b] = tab.t[i][width].clone();
        }
    }
    Ok(StandardSolution { value: tab.t[m2][width].clone(), x })
}
