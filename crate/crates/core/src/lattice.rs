//! Discrete velocity stencils.
//!
//! Direction ordering is a public contract: every closed-form boundary rule in
//! the crate is written against it.
//!
//! D2Q9: `0` rest, `1..=4` = +x, +y, -x, -y, `5..=8` = (1,1), (-1,1), (-1,-1), (1,-1).
//!
//! D3Q19: `0` rest, `1..=6` = +x, -x, +y, -y, +z, -z, then
//! `7..=10` = (1,1,0), (-1,1,0), (1,-1,0), (-1,-1,0),
//! `11..=14` = (1,0,1), (-1,0,1), (1,0,-1), (-1,0,-1),
//! `15..=18` = (0,1,1), (0,-1,1), (0,1,-1), (0,-1,-1).
//!
//! D3Q7: `0` rest, `1..=6` = +x, -x, +y, -y, +z, -z.

use std::fmt;
use std::str::FromStr;

use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::error::LatticeError;

/// Which velocity set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StencilKind {
    D2Q9,
    D3Q19,
    D3Q7,
}

impl FromStr for StencilKind {
    type Err = LatticeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "D2Q9" => Ok(Self::D2Q9),
            "D3Q19" => Ok(Self::D3Q19),
            "D3Q7" => Ok(Self::D3Q7),
            _ => Err(LatticeError::UnknownKind(s.to_string())),
        }
    }
}

impl fmt::Display for StencilKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::D2Q9 => "D2Q9",
            Self::D3Q19 => "D3Q19",
            Self::D3Q7 => "D3Q7",
        };
        f.write_str(s)
    }
}

const D2Q9_E: [[i32; 3]; 9] = [
    [0, 0, 0],
    [1, 0, 0],
    [0, 1, 0],
    [-1, 0, 0],
    [0, -1, 0],
    [1, 1, 0],
    [-1, 1, 0],
    [-1, -1, 0],
    [1, -1, 0],
];
const D2Q9_W: [(i64, i64); 9] = [
    (4, 9),
    (1, 9),
    (1, 9),
    (1, 9),
    (1, 9),
    (1, 36),
    (1, 36),
    (1, 36),
    (1, 36),
];

const D3Q19_E: [[i32; 3]; 19] = [
    [0, 0, 0],
    [1, 0, 0],
    [-1, 0, 0],
    [0, 1, 0],
    [0, -1, 0],
    [0, 0, 1],
    [0, 0, -1],
    [1, 1, 0],
    [-1, 1, 0],
    [1, -1, 0],
    [-1, -1, 0],
    [1, 0, 1],
    [-1, 0, 1],
    [1, 0, -1],
    [-1, 0, -1],
    [0, 1, 1],
    [0, -1, 1],
    [0, 1, -1],
    [0, -1, -1],
];

const D3Q7_E: [[i32; 3]; 7] = [
    [0, 0, 0],
    [1, 0, 0],
    [-1, 0, 0],
    [0, 1, 0],
    [0, -1, 0],
    [0, 0, 1],
    [0, 0, -1],
];

/// A discrete velocity set with weights and the opposite-direction map.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    kind: StencilKind,
    dim: usize,
    velocities: Vec<[i32; 3]>,
    weights_exact: Vec<Rational64>,
    weights: Vec<f64>,
    opposite: Vec<usize>,
    cs2_exact: Rational64,
    ev: Vec<[f64; 3]>,
}

fn to_f64(r: Rational64) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Builds the stencil for `kind`.
pub fn make_stencil(kind: StencilKind) -> Stencil {
    Stencil::new(kind)
}

impl Stencil {
    pub fn new(kind: StencilKind) -> Self {
        let (dim, velocities, weights_exact, cs2_exact): (usize, Vec<[i32; 3]>, Vec<Rational64>, _) =
            match kind {
                StencilKind::D2Q9 => (
                    2,
                    D2Q9_E.to_vec(),
                    D2Q9_W.iter().map(|&(n, d)| Rational64::new(n, d)).collect(),
                    Rational64::new(1, 3),
                ),
                StencilKind::D3Q19 => {
                    let w = D3Q19_E
                        .iter()
                        .map(|e| match e.iter().filter(|c| **c != 0).count() {
                            0 => Rational64::new(1, 3),
                            1 => Rational64::new(1, 18),
                            _ => Rational64::new(1, 36),
                        })
                        .collect();
                    (3, D3Q19_E.to_vec(), w, Rational64::new(1, 3))
                }
                StencilKind::D3Q7 => {
                    let w = (0..7)
                        .map(|i| if i == 0 { Rational64::new(1, 4) } else { Rational64::new(1, 8) })
                        .collect();
                    (3, D3Q7_E.to_vec(), w, Rational64::new(1, 4))
                }
            };
        let opposite = velocities
            .iter()
            .map(|e| {
                let neg = [-e[0], -e[1], -e[2]];
                velocities.iter().position(|v| *v == neg).expect("stencil is symmetric")
            })
            .collect();
        let weights = weights_exact.iter().map(|w| to_f64(*w)).collect();
        let ev = velocities
            .iter()
            .map(|e| [e[0] as f64, e[1] as f64, e[2] as f64])
            .collect();
        Self { kind, dim, velocities, weights_exact, weights, opposite, cs2_exact, ev }
    }

    pub fn kind(&self) -> StencilKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn q(&self) -> usize {
        self.velocities.len()
    }

    /// Integer direction vectors (z component is 0 for D2Q9).
    pub fn velocities(&self) -> &[[i32; 3]] {
        &self.velocities
    }

    /// Direction vectors as floats.
    pub fn ev(&self) -> &[[f64; 3]] {
        &self.ev
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_exact(&self) -> &[Rational64] {
        &self.weights_exact
    }

    pub fn opposite(&self) -> &[usize] {
        &self.opposite
    }

    pub fn cs2(&self) -> f64 {
        to_f64(self.cs2_exact)
    }

    pub fn cs2_exact(&self) -> Rational64 {
        self.cs2_exact
    }

    pub fn opposite_index(&self, i: usize) -> Result<usize, LatticeError> {
        self.opposite
            .get(i)
            .copied()
            .ok_or(LatticeError::IndexOutOfRange { index: i, q: self.q() })
    }

    /// Index of the direction with velocity `e`, if present.
    pub fn find(&self, e: [i32; 3]) -> Option<usize> {
        self.velocities.iter().position(|v| *v == e)
    }

    /// Checks every stencil identity in exact rational arithmetic.
    pub fn check_exact(&self) -> Result<(), String> {
        let zero = Rational64::from_integer(0);
        let one = Rational64::from_integer(1);
        let total: Rational64 = self.weights_exact.iter().copied().sum();
        if total != one {
            return Err(format!("{}: weights sum to {total}", self.kind));
        }
        for a in 0..self.dim {
            let m: Rational64 = self
                .weights_exact
                .iter()
                .zip(&self.velocities)
                .map(|(w, e)| *w * Rational64::from_integer(e[a] as i64))
                .sum();
            if m != zero {
                return Err(format!("{}: first moment along axis {a} is {m}", self.kind));
            }
            for b in 0..self.dim {
                let m: Rational64 = self
                    .weights_exact
                    .iter()
                    .zip(&self.velocities)
                    .map(|(w, e)| *w * Rational64::from_integer((e[a] * e[b]) as i64))
                    .sum();
                let expect = if a == b { self.cs2_exact } else { zero };
                if m != expect {
                    return Err(format!("{}: second moment ({a},{b}) is {m}", self.kind));
                }
            }
        }
        for i in 0..self.q() {
            let o = self.opposite[i];
            if self.opposite[o] != i {
                return Err(format!("{}: opposite is not an involution at {i}", self.kind));
            }
            let (e, eo) = (self.velocities[i], self.velocities[o]);
            if e[0] != -eo[0] || e[1] != -eo[1] || e[2] != -eo[2] {
                return Err(format!("{}: opposite of {i} does not negate", self.kind));
            }
        }
        Ok(())
    }

    /// Largest floating-point residual over the weight and moment identities.
    pub fn float_residual(&self) -> f64 {
        let mut worst = (self.weights.iter().sum::<f64>() - 1.0).abs();
        for a in 0..self.dim {
            let m: f64 = self.weights.iter().zip(&self.ev).map(|(w, e)| w * e[a]).sum();
            worst = worst.max(m.abs());
            for b in 0..self.dim {
                let m: f64 = self.weights.iter().zip(&self.ev).map(|(w, e)| w * e[a] * e[b]).sum();
                let expect = if a == b { self.cs2() } else { 0.0 };
                worst = worst.max((m - expect).abs());
            }
        }
        worst
    }
}
