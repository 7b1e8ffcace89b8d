//! States on full complex matrix algebras and the block-diagonal
//! embedding that moves an arbitrary state close to a prescribed one.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::certificate::{Certificate, Witness};
use crate::error::{Error, Result};
use crate::sample::{gaussian, rng};

/// Square complex matrix, row-major. Serialized as `{n, data}` with the
/// real and imaginary parts interleaved.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CMatrixRepr", into = "CMatrixRepr")]
pub struct CMatrix {
    n: usize,
    data: Vec<Complex64>,
}

#[derive(Clone, Serialize, Deserialize)]
struct CMatrixRepr {
    n: usize,
    #[serde(with = "crate::real::vec")]
    data: Vec<f64>,
}

impl From<CMatrix> for CMatrixRepr {
    fn from(m: CMatrix) -> Self {
        CMatrixRepr { n: m.n, data: m.data.iter().flat_map(|z| [z.re, z.im]).collect() }
    }
}

impl TryFrom<CMatrixRepr> for CMatrix {
    type Error = String;

    fn try_from(r: CMatrixRepr) -> core::result::Result<Self, String> {
        if r.data.len() != 2 * r.n * r.n {
            return Err(format!("expected {} interleaved reals, got {}", 2 * r.n * r.n, r.data.len()));
        }
        Ok(CMatrix { n: r.n, data: r.data.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect() })
    }
}

impl CMatrix {
    pub fn zeros(n: usize) -> Self {
        CMatrix { n, data: vec![Complex64::new(0.0, 0.0); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = CMatrix::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_entries(n: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Shape(format!("{} entries for an {n}x{n} matrix", data.len())));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NotFinite);
        }
        Ok(CMatrix { n, data })
    }

    /// The projection onto the span of `v`.
    pub fn projection(v: &[Complex64]) -> Self {
        let n = v.len();
        let norm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        let mut m = CMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.data[i * n + j] = v[i] * v[j].conj() / norm2;
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> Vec<Complex64> {
        self.data.clone()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, z: Complex64) {
        self.data[i * self.n + j] = z;
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn adjoint(&self) -> CMatrix {
        let n = self.n;
        let mut m = CMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.data[j * n + i] = self.data[i * n + j].conj();
            }
        }
        m
    }

    pub fn mul(&self, other: &CMatrix) -> CMatrix {
        let n = self.n;
        let mut m = CMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    m.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        m
    }

    pub fn sub(&self, other: &CMatrix) -> CMatrix {
        CMatrix { n: self.n, data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect() }
    }

    pub fn scale(&self, s: f64) -> CMatrix {
        CMatrix { n: self.n, data: self.data.iter().map(|z| z * s).collect() }
    }

    /// `Tr(self · x)` without forming the product.
    pub fn trace_pair(&self, x: &CMatrix) -> Complex64 {
        let n = self.n;
        let mut s = Complex64::new(0.0, 0.0);
        for i in 0..n {
            for k in 0..n {
                s += self.data[i * n + k] * x.data[k * n + i];
            }
        }
        s
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.sub(&self.adjoint()).max_abs() <= tol
    }

    /// The diagonal `d×d` block starting at row `i·d`.
    pub fn block(&self, i: usize, d: usize) -> CMatrix {
        let mut m = CMatrix::zeros(d);
        for r in 0..d {
            for c in 0..d {
                m.data[r * d + c] = self.get(i * d + r, i * d + c);
            }
        }
        m
    }

    /// Eigenvalues of a Hermitian matrix, ascending.
    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        let n = self.n;
        let m = 2 * n;
        // [[A, −B], [B, A]] carries every eigenvalue twice.
        let mut s = vec![0.0; m * m];
        for i in 0..n {
            for j in 0..n {
                let z = self.get(i, j);
                s[i * m + j] = z.re;
                s[(i + n) * m + j + n] = z.re;
                s[i * m + j + n] = -z.im;
                s[(i + n) * m + j] = z.im;
            }
        }
        let mut ev = jacobi_eigenvalues(&mut s, m);
        ev.sort_by(f64::total_cmp);
        ev.chunks(2).map(|c| 0.5 * (c[0] + c[1])).collect()
    }

    /// Largest singular value.
    pub fn op_norm(&self) -> f64 {
        let g = self.adjoint().mul(self);
        libm::sqrt(g.hermitian_eigenvalues().last().copied().unwrap_or(0.0).max(0.0))
    }

    /// Sum of singular values of a Hermitian matrix.
    pub fn trace_norm_hermitian(&self) -> f64 {
        self.hermitian_eigenvalues().iter().map(|v| v.abs()).sum()
    }
}

/// Cyclic Jacobi on a dense symmetric matrix; destroys `s`.
fn jacobi_eigenvalues(s: &mut [f64], m: usize) -> Vec<f64> {
    let scale: f64 = s.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
    for _ in 0..100 {
        let off: f64 = (0..m).flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| s[i * m + j] * s[i * m + j]).sum();
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..m {
            for q in p + 1..m {
                let apq = s[p * m + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (s[q * m + q] - s[p * m + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let sn = t * c;
                for k in 0..m {
                    let akp = s[k * m + p];
                    let akq = s[k * m + q];
                    s[k * m + p] = c * akp - sn * akq;
                    s[k * m + q] = sn * akp + c * akq;
                }
                for k in 0..m {
                    let apk = s[p * m + k];
                    let aqk = s[q * m + k];
                    s[p * m + k] = c * apk - sn * aqk;
                    s[q * m + k] = sn * apk + c * aqk;
                }
            }
        }
    }
    (0..m).map(|i| s[i * m + i]).collect()
}

/// Positive matrix of trace one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix {
    pub entries: CMatrix,
}

pub const DENSITY_TOL: f64 = 1e-12;

impl DensityMatrix {
    pub fn new(entries: CMatrix) -> Result<Self> {
        let tol = DENSITY_TOL * (entries.n() as f64).max(1.0);
        if entries.n() == 0 {
            return Err(Error::ZeroDimensional);
        }
        if !entries.is_hermitian(tol) {
            return Err(Error::Precondition("density matrix is not Hermitian".into()));
        }
        if (entries.trace().re - 1.0).abs() > tol {
            return Err(Error::Precondition(format!("density trace {} is not 1", entries.trace().re)));
        }
        if entries.hermitian_eigenvalues()[0] < -tol {
            return Err(Error::Precondition("density matrix is not positive".into()));
        }
        Ok(DensityMatrix { entries })
    }

    /// `G G* / Tr(G G*)`, positive by construction.
    pub fn from_factor(n: usize, g: &[Complex64], rank: usize) -> Result<Self> {
        if g.len() != n * rank || rank == 0 {
            return Err(Error::Shape("factor must be n x rank".into()));
        }
        let total: f64 = g.iter().map(|z| z.norm_sqr()).sum();
        if !(total > 0.0) {
            return Err(Error::Precondition("zero factor".into()));
        }
        let mut m = CMatrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                let mut s = Complex64::new(0.0, 0.0);
                for r in 0..rank {
                    s += g[i * rank + r] * g[j * rank + r].conj();
                }
                m.set(i, j, s / total);
                m.set(j, i, (s / total).conj());
            }
        }
        Ok(DensityMatrix { entries: m })
    }

    pub fn maximally_mixed(n: usize) -> Self {
        DensityMatrix { entries: CMatrix::identity(n).scale(1.0 / n as f64) }
    }

    pub fn dim(&self) -> usize {
        self.entries.n()
    }
}

/// The state `x ↦ Tr(a x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixState {
    pub density: DensityMatrix,
}

impl MatrixState {
    pub fn new(density: DensityMatrix) -> Self {
        MatrixState { density }
    }

    pub fn normalized_trace(n: usize) -> Self {
        MatrixState { density: DensityMatrix::maximally_mixed(n) }
    }

    pub fn dim(&self) -> usize {
        self.density.dim()
    }

    pub fn eval(&self, x: &CMatrix) -> Complex64 {
        self.density.entries.trace_pair(x)
    }
}

fn complex_gaussian<R: Rng>(r: &mut R) -> Complex64 {
    Complex64::new(gaussian(r), gaussian(r))
}

/// A random density of the given rank; `row_weights` rescales the rows of
/// the Gaussian factor so that mass can be steered onto chosen blocks.
pub fn random_density<R: Rng>(r: &mut R, n: usize, rank: usize, row_weights: Option<&[f64]>) -> Result<DensityMatrix> {
    let mut g: Vec<Complex64> = (0..n * rank).map(|_| complex_gaussian(r)).collect();
    if let Some(w) = row_weights {
        if w.len() != n {
            return Err(Error::Shape("one weight per row".into()));
        }
        for i in 0..n {
            for k in 0..rank {
                g[i * rank + k] *= w[i];
            }
        }
    }
    DensityMatrix::from_factor(n, &g, rank)
}

/// A random matrix of operator norm one.
pub fn random_unit_matrix<R: Rng>(r: &mut R, n: usize) -> CMatrix {
    loop {
        let m = CMatrix { n, data: (0..n * n).map(|_| complex_gaussian(r)).collect() };
        let norm = m.op_norm();
        if norm > 1e-9 {
            return m.scale(1.0 / norm);
        }
    }
}

/// The diagonal blocks `a_i = p_i a p_i` of size `d`.
pub fn block_compress(a: &DensityMatrix, d: usize) -> Result<Vec<CMatrix>> {
    let n = a.dim();
    if d == 0 || n % d != 0 {
        return Err(Error::Shape(format!("dimension {n} is not a multiple of {d}")));
    }
    Ok((0..n / d).map(|i| a.entries.block(i, d)).collect())
}

/// Positive contractions `λ·p` for the eigenvalue levels `λ` and the frame
/// of rank-one projections onto `e_i`, `(e_i ± e_j)/√2`, `(e_i ± i e_j)/√2`,
/// together with the identity.
pub fn positive_net(d: usize, levels: &[f64]) -> Result<Vec<CMatrix>> {
    if d == 0 || levels.is_empty() || levels.iter().any(|l| !(*l > 0.0 && *l <= 1.0)) {
        return Err(Error::Precondition("levels must lie in (0, 1]".into()));
    }
    let zero = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let mut frame = Vec::new();
    for i in 0..d {
        let mut v = vec![zero; d];
        v[i] = one;
        frame.push(v);
    }
    for i in 0..d {
        for j in i + 1..d {
            for c in [one, -one, Complex64::new(0.0, 1.0), Complex64::new(0.0, -1.0)] {
                let mut v = vec![zero; d];
                v[i] = one;
                v[j] = c;
                frame.push(v);
            }
        }
    }
    let mut net = vec![CMatrix::identity(d)];
    for &l in levels {
        for v in &frame {
            net.push(CMatrix::projection(v).scale(l));
        }
    }
    Ok(net)
}

/// First block `i` with `Re Tr(a_i b) ≤ 1/ℓ` for every `b` in the net.
pub fn find_light_block(blocks: &[CMatrix], net: &[CMatrix], ell: usize) -> Result<usize> {
    let k = blocks.len();
    if ell == 0 || k <= ell * net.len() {
        return Err(Error::Precondition(format!("need more than {} blocks, have {k}", ell * net.len())));
    }
    blocks
        .iter()
        .position(|a| is_light(a, net, ell))
        .ok_or_else(|| Error::Precondition("no light block; the density is not positive".into()))
}

pub fn is_light(block: &CMatrix, net: &[CMatrix], ell: usize) -> bool {
    let bound = 1.0 / ell as f64;
    net.iter().all(|b| block.trace_pair(b).re <= bound)
}

/// `ℓ = ⌈16/ε⌉`.
pub fn ell_for(eps: f64) -> Result<usize> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::Precondition("eps must be positive".into()));
    }
    Ok(libm::ceil(16.0 / eps - 1e-12) as usize)
}

/// Number of blocks `k = ℓ|P| + 1`.
pub fn blocks_for(eps: f64, net_size: usize) -> Result<usize> {
    Ok(ell_for(eps)? * net_size + 1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimalityConfig {
    /// Eigenvalue levels of the positive net.
    #[serde(with = "crate::real::vec")]
    pub levels: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
}

impl Default for MinimalityConfig {
    fn default() -> Self {
        MinimalityConfig { levels: vec![1.0], samples: 1000, seed: 0 }
    }
}

/// The embedding `x ↦ diag(…, x, …)` with `x` on the light block and
/// `t(x)` on every other diagonal entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixEmbedding {
    pub d: usize,
    pub k: usize,
    pub ell: usize,
    pub net_size: usize,
    pub light_block: usize,
    /// Recheck of `Tr(a_i b) ≤ 1/ℓ` over the net.
    pub light_recheck: bool,
    /// `‖a_i‖_1` on the light block.
    #[serde(with = "crate::real")]
    pub light_norm: f64,
    /// `|Σ_{j≠i} Tr(a_j) − 1|`.
    #[serde(with = "crate::real")]
    pub trace_gap: f64,
    pub unital: bool,
    pub self_adjoint: bool,
    /// Largest `|‖φ(x)‖ − ‖x‖|` over the samples.
    #[serde(with = "crate::real")]
    pub isometry_gap: f64,
    pub certificate: Certificate,
}

impl MatrixEmbedding {
    /// `φ(x)` as a `kd × kd` matrix.
    pub fn apply(&self, t: &MatrixState, x: &CMatrix) -> CMatrix {
        embed(self.d, self.k, self.light_block, t, x)
    }

    /// The termwise bounds `‖a_i‖ ≤ 8/ℓ` and `|Σ Tr − 1| ≤ 8/ℓ`.
    pub fn termwise_pass(&self) -> bool {
        let b = 8.0 / self.ell as f64;
        self.light_norm <= b && self.trace_gap <= b
    }
}

fn embed(d: usize, k: usize, light: usize, t: &MatrixState, x: &CMatrix) -> CMatrix {
    let tx = t.eval(x);
    let mut m = CMatrix::zeros(k * d);
    for b in 0..k {
        for r in 0..d {
            if b == light {
                for c in 0..d {
                    m.set(b * d + r, b * d + c, x.get(r, c));
                }
            } else {
                m.set(b * d + r, b * d + r, tx);
            }
        }
    }
    m
}

pub fn minimal_embedding(d: usize, eps: f64, s: &MatrixState, t: &MatrixState, cfg: &MinimalityConfig) -> Result<MatrixEmbedding> {
    if t.dim() != d {
        return Err(Error::Shape(format!("t acts on M_{}, expected M_{d}", t.dim())));
    }
    let ell = ell_for(eps)?;
    let net = positive_net(d, &cfg.levels)?;
    let k_needed = ell * net.len() + 1;
    if s.dim() % d != 0 || s.dim() / d < k_needed {
        return Err(Error::Precondition(format!(
            "s must act on M_(kd) with k >= {k_needed} (l = {ell}, |P| = {}); got dimension {}",
            net.len(),
            s.dim()
        )));
    }
    let blocks = block_compress(&s.density, d)?;
    let k = blocks.len();
    let light = find_light_block(&blocks, &net, ell)?;
    let light_recheck = is_light(&blocks[light], &net, ell);
    let light_norm = blocks[light].trace_norm_hermitian();
    let rest: f64 = blocks.iter().enumerate().filter(|(i, _)| *i != light).map(|(_, b)| b.trace().re).sum();
    let trace_gap = (rest - 1.0).abs();
    let mut r = rng(cfg.seed);
    let samples: Vec<CMatrix> = (0..cfg.samples).map(|_| random_unit_matrix(&mut r, d)).collect();
    let unital = embed(d, k, light, t, &CMatrix::identity(d)).sub(&CMatrix::identity(k * d)).max_abs() <= 1e-12;
    let mut self_adjoint = true;
    let mut isometry_gap: f64 = 0.0;
    for x in samples.iter().take(32) {
        let lhs = embed(d, k, light, t, &x.adjoint());
        let rhs = embed(d, k, light, t, x).adjoint();
        self_adjoint &= lhs.sub(&rhs).max_abs() <= 1e-12;
        // φ(x) is block diagonal: its norm is the larger of ‖x‖ and |t(x)|.
        let phi_norm = x.op_norm().max(t.eval(x).norm());
        isometry_gap = isometry_gap.max((phi_norm - x.op_norm()).abs());
    }
    let witness = Witness::MatrixSamples {
        d,
        light_block: light,
        s: s.density.entries.clone(),
        t: t.density.entries.clone(),
        samples,
    };
    let measured = witness.recompute(crate::lp::default_engine())?;
    let certificate = Certificate::new("sampled |s(phi(x)) - t(x)| <= 16/l over unit-norm x", 16.0 / ell as f64, measured, witness);
    Ok(MatrixEmbedding {
        d,
        k,
        ell,
        net_size: net.len(),
        light_block: light,
        light_recheck,
        light_norm,
        trace_gap,
        unital,
        self_adjoint,
        isometry_gap,
        certificate,
    })
}

/// `max |s(φ(x)) − t(x)|` over the samples, where `φ` places `x` on block
/// `light_block` and `t(x)` elsewhere on the diagonal.
pub fn sampled_defect(d: usize, light_block: usize, s: &CMatrix, t: &CMatrix, samples: &[CMatrix]) -> Result<f64> {
    if d == 0 || t.n() != d || s.n() % d != 0 || light_block >= s.n() / d {
        return Err(Error::Shape("matrix sample witness has inconsistent sizes".into()));
    }
    let k = s.n() / d;
    let corner = s.block(light_block, d);
    let rest: Complex64 = (0..k).filter(|&i| i != light_block).map(|i| s.block(i, d).trace()).sum();
    let mut worst: f64 = 0.0;
    for x in samples {
        if x.n() != d {
            return Err(Error::Shape("sample size".into()));
        }
        let tx = t.trace_pair(x);
        let sphi = corner.trace_pair(x) + tx * rest;
        worst = worst.max((sphi - tx).norm());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixed_density_blocks() {
        let a = DensityMatrix::maximally_mixed(6);
        let b = block_compress(&a, 2).unwrap();
        assert_eq!(b.len(), 3);
        for blk in &b {
            assert!(blk.sub(&CMatrix::identity(2).scale(1.0 / 6.0)).max_abs() < 1e-15);
        }
        assert!(block_compress(&a, 4).is_err());
    }

    #[test]
    fn pauli_net_has_seven_members() {
        let p = positive_net(2, &[1.0]).unwrap();
        assert_eq!(p.len(), 7);
        for b in &p {
            let ev = b.hermitian_eigenvalues();
            assert!(ev[0] >= -1e-12 && ev[1] <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn eigenvalues_of_a_pauli_matrix() {
        let mut y = CMatrix::zeros(2);
        y.set(0, 1, Complex64::new(0.0, -1.0));
        y.set(1, 0, Complex64::new(0.0, 1.0));
        let ev = y.hermitian_eigenvalues();
        assert!((ev[0] + 1.0).abs() < 1e-12 && (ev[1] - 1.0).abs() < 1e-12);
        assert!((y.op_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalized_traces_give_zero_defect() {
        let d = 2;
        let net = positive_net(d, &[1.0]).unwrap();
        let k = 16 * net.len() + 1;
        let s = MatrixState::normalized_trace(k * d);
        let t = MatrixState::normalized_trace(d);
        let e = minimal_embedding(d, 1.0, &s, &t, &MinimalityConfig { samples: 50, ..Default::default() }).unwrap();
        assert_eq!(e.light_block, 0);
        assert!(e.certificate.measured <= 1e-14);
    }

    #[test]
    fn one_dimensional_case_is_exact() {
        let k = 16 * 2 + 1;
        let mut r = rng(3);
        let s = MatrixState::new(random_density(&mut r, k, 3, None).unwrap());
        let t = MatrixState::normalized_trace(1);
        let e = minimal_embedding(1, 1.0, &s, &t, &MinimalityConfig { samples: 50, ..Default::default() }).unwrap();
        assert!(e.certificate.measured <= 1e-12);
    }

    #[test]
    fn too_few_blocks_are_rejected() {
        let s = MatrixState::normalized_trace(20);
        let t = MatrixState::normalized_trace(2);
        let err = minimal_embedding(2, 1.0, &s, &t, &MinimalityConfig::default()).unwrap_err();
        assert!(format!("{err}").contains("113"));
    }

    #[test]
    fn interleaved_serialization() {
        let mut m = CMatrix::zeros(1);
        m.set(0, 0, Complex64::new(0.25, -0.5));
        let j = serde_json::to_string(&m).unwrap();
        assert!(j.contains("\"2.5") && j.contains("\"-5.0"));
        let back: CMatrix = serde_json::from_str(&j).unwrap();
        assert_eq!(back, m);
    }
}
