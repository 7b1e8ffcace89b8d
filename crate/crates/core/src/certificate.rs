//! Machine-checkable records of claimed bounds. Each certificate carries a
//! witness from which its measured value can be recomputed.

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::linalg::Matrix;
use crate::lp::LpEngine;
use crate::matrix_states::{self, CMatrix};
use crate::normed_core::{distortion_with, op_norm_with, LinearMap, NormedSpace};
use crate::{function_systems, universal_maps};

/// Default slack allowed between a measured value and its bound.
pub const CERT_TOL: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub claim: String,
    /// Hex SHA-256 of the witness inputs (and of any chain referenced).
    pub inputs: String,
    #[serde(with = "crate::real")]
    pub bound: f64,
    #[serde(with = "crate::real")]
    pub measured: f64,
    #[serde(with = "crate::real")]
    pub slack: f64,
    #[serde(with = "crate::real")]
    pub tolerance: f64,
    pub pass: bool,
    pub witness: Witness,
}

impl Certificate {
    pub fn new(claim: &str, bound: f64, measured: f64, witness: Witness) -> Self {
        Self::with_tolerance(claim, bound, measured, CERT_TOL, witness)
    }

    pub fn with_tolerance(claim: &str, bound: f64, measured: f64, tolerance: f64, witness: Witness) -> Self {
        let inputs = witness.content_hash();
        Certificate {
            claim: claim.to_string(),
            inputs,
            bound,
            measured,
            slack: bound - measured,
            tolerance,
            pass: measured.is_finite() && measured <= bound + tolerance,
            witness,
        }
    }

    /// Recomputes the measured value from the witness and checks that the
    /// stored fields are consistent with it.
    pub fn verify(&self, engine: LpEngine) -> Result<Verification> {
        let recomputed = self.witness.recompute(engine)?;
        let hash_ok = self.witness.content_hash() == self.inputs;
        let agrees = (recomputed - self.measured).abs() <= 1e-7 * (1.0 + self.measured.abs())
            || (recomputed.is_infinite() && self.measured.is_infinite());
        let pass = recomputed.is_finite() && recomputed <= self.bound + self.tolerance;
        Ok(Verification { recomputed, hash_ok, agrees, pass, consistent: hash_ok && agrees && pass == self.pass })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Verification {
    pub recomputed: f64,
    pub hash_ok: bool,
    pub agrees: bool,
    pub pass: bool,
    /// Hash, measured value and verdict all reproduce.
    pub consistent: bool,
}

/// Inputs from which a measured value is recomputed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    /// `‖left − right‖`.
    MapDistance { left: LinearMap, right: LinearMap },
    /// `I(map)`.
    Distortion { map: LinearMap },
    /// `‖map‖`.
    OpNorm { map: LinearMap },
    /// Dual norm of a functional on `space`.
    DualNorm {
        space: NormedSpace,
        #[serde(with = "crate::real::vec")]
        functional: Vec<f64>,
    },
    /// Largest of the parts.
    Max { parts: Vec<Witness> },
    /// Value fixed by construction (for example a count); not recomputable
    /// beyond itself.
    Constant {
        #[serde(with = "crate::real")]
        value: f64,
    },
    /// Largest least feasible ε of the face condition over the samples.
    Facial {
        map: LinearMap,
        #[serde(with = "crate::real::vecvec")]
        samples: Vec<Vec<f64>>,
    },
    /// Largest least feasible ε of the biface condition over `(y, u)` pairs.
    Biface {
        map: LinearMap,
        #[serde(with = "crate::real::vecvec")]
        ys: Vec<Vec<f64>>,
        #[serde(with = "crate::real::vecvec")]
        us: Vec<Vec<f64>>,
    },
    /// Largest distance from unit probes to the image of the unit ball.
    Surjectivity {
        map: LinearMap,
        #[serde(with = "crate::real::vecvec")]
        probes: Vec<Vec<f64>>,
    },
    /// Sampled `|s(φ(x)) − t(x)|` for the block embedding of a matrix state.
    MatrixSamples {
        d: usize,
        light_block: usize,
        s: CMatrix,
        t: CMatrix,
        samples: Vec<CMatrix>,
    },
    /// A witness whose value is referenced against a chain.
    Chained { chain_hash: String, inner: Box<Witness> },
}

impl Witness {
    pub fn recompute(&self, engine: LpEngine) -> Result<f64> {
        Ok(match self {
            Witness::MapDistance { left, right } => op_norm_with(engine, &left.sub(right)?)?,
            Witness::Distortion { map } => distortion_with(engine, map)?,
            Witness::OpNorm { map } => op_norm_with(engine, map)?,
            Witness::DualNorm { space, functional } => space.dual_norm_with(engine, functional)?,
            Witness::Max { parts } => {
                let mut m: f64 = 0.0;
                for p in parts {
                    m = m.max(p.recompute(engine)?);
                }
                m
            }
            Witness::Constant { value } => *value,
            Witness::Facial { map, samples } => {
                let mut m: f64 = 0.0;
                for u in samples {
                    m = m.max(function_systems::facial_min_eps_with(engine, map, u)?);
                }
                m
            }
            Witness::Biface { map, ys, us } => {
                let mut m: f64 = 0.0;
                for (y, u) in ys.iter().zip(us) {
                    m = m.max(function_systems::biface_min_eps_with(engine, map, y, u)?);
                }
                m
            }
            Witness::Surjectivity { map, probes } => universal_maps::surjectivity_defect_with(engine, map, probes)?,
            Witness::MatrixSamples { d, light_block, s, t, samples } => {
                matrix_states::sampled_defect(*d, *light_block, s, t, samples)?
            }
            Witness::Chained { inner, .. } => inner.recompute(engine)?,
        })
    }

    pub fn content_hash(&self) -> String {
        let mut h = ContentHasher::new();
        self.feed(&mut h);
        h.finish()
    }

    fn feed(&self, h: &mut ContentHasher) {
        match self {
            Witness::MapDistance { left, right } => {
                h.tag("map_distance");
                h.map(left);
                h.map(right);
            }
            Witness::Distortion { map } => {
                h.tag("distortion");
                h.map(map);
            }
            Witness::OpNorm { map } => {
                h.tag("op_norm");
                h.map(map);
            }
            Witness::DualNorm { space, functional } => {
                h.tag("dual_norm");
                h.space(space);
                h.reals(functional);
            }
            Witness::Max { parts } => {
                h.tag("max");
                h.usize(parts.len());
                for p in parts {
                    p.feed(h);
                }
            }
            Witness::Constant { value } => {
                h.tag("constant");
                h.real(*value);
            }
            Witness::Facial { map, samples } => {
                h.tag("facial");
                h.map(map);
                h.usize(samples.len());
                for s in samples {
                    h.reals(s);
                }
            }
            Witness::Biface { map, ys, us } => {
                h.tag("biface");
                h.map(map);
                h.usize(ys.len());
                for (y, u) in ys.iter().zip(us) {
                    h.reals(y);
                    h.reals(u);
                }
            }
            Witness::Surjectivity { map, probes } => {
                h.tag("surjectivity");
                h.map(map);
                h.usize(probes.len());
                for p in probes {
                    h.reals(p);
                }
            }
            Witness::MatrixSamples { d, light_block, s, t, samples } => {
                h.tag("matrix_samples");
                h.usize(*d);
                h.usize(*light_block);
                h.cmatrix(s);
                h.cmatrix(t);
                h.usize(samples.len());
                for x in samples {
                    h.cmatrix(x);
                }
            }
            Witness::Chained { chain_hash, inner } => {
                h.tag("chained");
                h.tag(chain_hash);
                inner.feed(h);
            }
        }
    }
}

/// SHA-256 over a canonical little-endian encoding of the inputs.
pub struct ContentHasher(Sha256);

impl Default for ContentHasher {
    fn default() -> Self {
        Self::new()
    }
}

impl ContentHasher {
    pub fn new() -> Self {
        ContentHasher(Sha256::new())
    }

    pub fn tag(&mut self, s: &str) {
        self.usize(s.len());
        self.0.update(s.as_bytes());
    }

    pub fn usize(&mut self, n: usize) {
        self.0.update((n as u64).to_le_bytes());
    }

    pub fn real(&mut self, x: f64) {
        // Normalize -0.0 so equal values hash equally.
        let x = if x == 0.0 { 0.0 } else { x };
        self.0.update(x.to_bits().to_le_bytes());
    }

    pub fn reals(&mut self, v: &[f64]) {
        self.usize(v.len());
        for x in v {
            self.real(*x);
        }
    }

    pub fn matrix(&mut self, m: &Matrix) {
        self.usize(m.rows());
        self.usize(m.cols());
        for x in m.as_slice() {
            self.real(*x);
        }
    }

    pub fn space(&mut self, s: &NormedSpace) {
        self.matrix(s.norming());
    }

    pub fn map(&mut self, m: &LinearMap) {
        self.space(m.dom());
        self.space(m.cod());
        self.matrix(m.matrix());
    }

    pub fn cmatrix(&mut self, m: &CMatrix) {
        self.usize(m.n());
        for z in m.entries() {
            self.real(z.re);
            self.real(z.im);
        }
    }

    pub fn finish(self) -> String {
        let digest = self.0.finalize();
        let mut s = String::with_capacity(64);
        for b in digest.iter() {
            s.push(char::from_digit((b >> 4) as u32, 16).unwrap());
            s.push(char::from_digit((b & 15) as u32, 16).unwrap());
        }
        s
    }
}
