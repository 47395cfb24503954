//! Transposed boundary maps.
//!
//! Each forward closure is probed with unit vectors to obtain its exact local
//! Jacobian, which is then applied transposed. Closed-form transposes for the
//! common open-boundary layouts run as a fast path and are checked against the
//! probed matrices when the operator is built.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{Face, Role};
use crate::error::AdjointError;
use crate::forward::boundary::{apply_thermal_closure, FlowClosure, OpenKind, ThermalClosure};
use crate::forward::thermal::ThermalModel;
use crate::forward::FlowModel;
use crate::lattice::StencilKind;

/// Closed-form transposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FastPath {
    /// Full reversal (walls), flow or thermal.
    Reversal,
    /// 2D velocity inlet on the x- face.
    VelocityInlet2d,
    /// 2D density outlet on the y- face.
    DensityOutlet2d,
    /// 3D velocity inlet on the x- face.
    VelocityInlet3d,
    /// 3D density outlet on the z- face.
    DensityOutletZ3d,
    /// 3D density inlet on the x- face.
    DensityInletX3d,
    /// 3D density outlet on the x+ face.
    DensityOutletX3d,
    /// Thermal anti-bounce-back inlet on the x- face.
    ThermalInlet,
    /// Thermal zero-gradient outlet on the x+ face.
    ThermalOutlet,
}

#[derive(Debug, Clone)]
struct Entry {
    node: usize,
    role: Role,
    mat: usize,
    upstream: Option<usize>,
    fast: Option<FastPath>,
}

/// `Bᵀ` for one population family.
#[derive(Debug, Clone)]
pub struct BoundaryTranspose {
    q: usize,
    opposite: Vec<usize>,
    /// Row-major `q × ncol` Jacobians, `ncol = q` or `2q` (with upstream block).
    mats: Vec<(usize, Vec<f64>)>,
    entries: Vec<Entry>,
    use_fast: bool,
}

fn flow_fast_path(kind: StencilKind, closure: &FlowClosure) -> Option<FastPath> {
    match closure {
        FlowClosure::Wall => Some(FastPath::Reversal),
        FlowClosure::Open { face, kind: ok, mirror } if mirror.is_empty() => match (kind, face, ok) {
            (StencilKind::D2Q9, Face::XMin, OpenKind::Velocity(_)) => Some(FastPath::VelocityInlet2d),
            (StencilKind::D2Q9, Face::YMin, OpenKind::Density(_)) => Some(FastPath::DensityOutlet2d),
            (StencilKind::D3Q19, Face::XMin, OpenKind::Velocity(_)) => Some(FastPath::VelocityInlet3d),
            (StencilKind::D3Q19, Face::ZMin, OpenKind::Density(_)) => Some(FastPath::DensityOutletZ3d),
            (StencilKind::D3Q19, Face::XMin, OpenKind::Density(_)) => Some(FastPath::DensityInletX3d),
            (StencilKind::D3Q19, Face::XMax, OpenKind::Density(_)) => Some(FastPath::DensityOutletX3d),
            _ => None,
        },
        _ => None,
    }
}

fn thermal_fast_path(closure: &ThermalClosure) -> Option<FastPath> {
    match closure {
        ThermalClosure::Wall => Some(FastPath::Reversal),
        ThermalClosure::Inlet { mirror, unknown, .. } if mirror.is_empty() && unknown == &[1] => {
            Some(FastPath::ThermalInlet)
        }
        ThermalClosure::Outlet { mirror, unknown, .. } if mirror.is_empty() && unknown == &[2] => {
            Some(FastPath::ThermalOutlet)
        }
        _ => None,
    }
}

/// Shape shared by the three 3D density closures: `axis` and `diag` are the
/// unknown directions, `tang` and `out` the tangential and outgoing ones.
fn density_3d(fc: &[f64], out: &mut [f64], axis: usize, diag: [usize; 4], tang: [usize; 9], outg: [usize; 5]) {
    let s = 2.0 * fc[axis] + fc[diag[0]] + fc[diag[1]] + fc[diag[2]] + fc[diag[3]];
    out[axis] = 0.0;
    for d in diag {
        out[d] = 0.0;
    }
    for i in tang {
        out[i] = fc[i] - s / 6.0;
    }
    // the outgoing partner of each unknown direction
    let partner = |i: usize| -> usize {
        match i {
            1 => 2,
            2 => 1,
            5 => 6,
            6 => 5,
            7 => 10,
            10 => 7,
            8 => 9,
            9 => 8,
            11 => 14,
            14 => 11,
            12 => 13,
            13 => 12,
            15 => 18,
            18 => 15,
            16 => 17,
            17 => 16,
            _ => unreachable!(),
        }
    };
    for i in outg {
        out[i] = fc[i] + fc[partner(i)] - s / 3.0;
    }
}

/// Evaluates a closed form. Returns the own-node result in `out` and, for the
/// thermal outlet, the contribution to the upstream node in `up`.
pub fn apply_fast(path: FastPath, opposite: &[usize], fc: &[f64], out: &mut [f64], up: &mut [f64]) {
    match path {
        FastPath::Reversal => {
            for i in 0..fc.len() {
                out[i] = fc[opposite[i]];
            }
        }
        FastPath::VelocityInlet2d => {
            out[1] = 0.0;
            out[5] = 0.0;
            out[8] = 0.0;
            out[0] = fc[0];
            out[2] = fc[2] - 0.5 * fc[5] + 0.5 * fc[8];
            out[4] = fc[4] + 0.5 * fc[5] - 0.5 * fc[8];
            out[3] = fc[3] + fc[1];
            out[6] = fc[6] + fc[8];
            out[7] = fc[7] + fc[5];
        }
        FastPath::DensityOutlet2d => {
            let (c2, c5, c6) = (fc[2], fc[5], fc[6]);
            out[2] = 0.0;
            out[5] = 0.0;
            out[6] = 0.0;
            out[0] = fc[0] - 2.0 / 3.0 * c2 - c5 / 6.0 - c6 / 6.0;
            out[1] = fc[1] - 2.0 / 3.0 * c2 - 2.0 / 3.0 * c5 + c6 / 3.0;
            out[3] = fc[3] - 2.0 / 3.0 * c2 + c5 / 3.0 - 2.0 / 3.0 * c6;
            out[4] = fc[4] - c2 / 3.0 - c5 / 3.0 - c6 / 3.0;
            out[7] = fc[7] - 4.0 / 3.0 * c2 + 2.0 / 3.0 * c5 - c6 / 3.0;
            out[8] = fc[8] - 4.0 / 3.0 * c2 - c5 / 3.0 + 2.0 / 3.0 * c6;
        }
        FastPath::VelocityInlet3d => {
            out.copy_from_slice(fc);
            for i in [1, 7, 9, 11, 13] {
                out[i] = 0.0;
            }
            out[2] = fc[2] + fc[1];
            out[8] = fc[8] + fc[9];
            out[10] = fc[10] + fc[7];
            out[12] = fc[12] + fc[13];
            out[14] = fc[14] + fc[11];
        }
        FastPath::DensityOutletZ3d => {
            density_3d(fc, out, 5, [11, 12, 15, 16], [0, 1, 2, 3, 4, 7, 8, 9, 10], [6, 13, 14, 17, 18])
        }
        FastPath::DensityInletX3d => {
            density_3d(fc, out, 1, [7, 9, 11, 13], [0, 3, 4, 5, 6, 15, 16, 17, 18], [2, 8, 10, 12, 14])
        }
        FastPath::DensityOutletX3d => {
            density_3d(fc, out, 2, [8, 10, 12, 14], [0, 3, 4, 5, 6, 15, 16, 17, 18], [1, 7, 9, 11, 13])
        }
        FastPath::ThermalInlet => {
            out.copy_from_slice(fc);
            out[1] = 0.0;
            out[2] = fc[2] - fc[1];
        }
        FastPath::ThermalOutlet => {
            out.copy_from_slice(fc);
            out[2] = 0.0;
            up.iter_mut().for_each(|v| *v = 0.0);
            up[2] = fc[2];
        }
    }
}

/// Interns matrices by bit pattern.
struct Interner {
    mats: Vec<(usize, Vec<f64>)>,
    index: HashMap<Vec<u64>, usize>,
}

impl Interner {
    fn new() -> Self {
        Self { mats: Vec::new(), index: HashMap::new() }
    }

    fn add(&mut self, ncol: usize, m: Vec<f64>) -> usize {
        let key: Vec<u64> = m.iter().map(|v| v.to_bits()).chain([ncol as u64]).collect();
        if let Some(&k) = self.index.get(&key) {
            return k;
        }
        self.mats.push((ncol, m));
        self.index.insert(key, self.mats.len() - 1);
        self.mats.len() - 1
    }
}

impl BoundaryTranspose {
    /// Builds `Bᵀ` for the flow populations of `model`, verifying every fast
    /// path against its probed Jacobian.
    pub fn flow(model: &FlowModel) -> Result<Self, AdjointError> {
        let q = model.q();
        let ctx = model.bc_context();
        let mut interner = Interner::new();
        let mut entries = Vec::new();
        for b in model.boundary_nodes() {
            let mut m = vec![0.0; q * q];
            for k in 0..q {
                let mut v = vec![0.0; q];
                v[k] = 1.0;
                ctx.apply(&b.closure, &mut v, true);
                for (row, val) in v.iter().enumerate() {
                    m[row * q + k] = *val;
                }
            }
            let mat = interner.add(q, m);
            let fast = flow_fast_path(model.stencil().kind(), &b.closure);
            entries.push(Entry { node: b.node, role: b.role, mat, upstream: None, fast });
        }
        let bt = Self { q, opposite: model.stencil().opposite().to_vec(), mats: interner.mats, entries, use_fast: true };
        bt.verify(8, 0x5eed)?;
        Ok(bt)
    }

    /// Builds `Bᵀ` for the thermal populations.
    pub fn thermal(model: &ThermalModel) -> Result<Self, AdjointError> {
        let q = 7;
        let st = model.stencil();
        let mut interner = Interner::new();
        let mut entries = Vec::new();
        for b in model.boundary_nodes() {
            let upstream = match b.closure {
                ThermalClosure::Outlet { upstream, .. } => Some(upstream),
                _ => None,
            };
            let ncol = if upstream.is_some() { 2 * q } else { q };
            let mut m = vec![0.0; q * ncol];
            for k in 0..ncol {
                let mut own = vec![0.0; q];
                let mut up = vec![0.0; q];
                if k < q {
                    own[k] = 1.0;
                } else {
                    up[k - q] = 1.0;
                }
                apply_thermal_closure(st, &b.closure, &mut own, Some(&up), true);
                for (row, val) in own.iter().enumerate() {
                    m[row * ncol + k] = *val;
                }
            }
            let mat = interner.add(ncol, m);
            entries.push(Entry { node: b.node, role: b.role, mat, upstream, fast: thermal_fast_path(&b.closure) });
        }
        let bt = Self { q, opposite: st.opposite().to_vec(), mats: interner.mats, entries, use_fast: true };
        bt.verify(8, 0x7e3a)?;
        Ok(bt)
    }

    /// Disables the closed forms so every node uses its probed Jacobian.
    pub fn mechanical_only(mut self) -> Self {
        self.use_fast = false;
        self
    }

    pub fn fast_paths_in_use(&self) -> Vec<FastPath> {
        let mut v: Vec<FastPath> = self.entries.iter().filter_map(|e| e.fast).collect();
        v.sort_by_key(|p| *p as u8);
        v.dedup();
        v
    }

    fn mechanical_node(&self, e: &Entry, fc: &[f64], out: &mut [f64], up: &mut [f64]) {
        let (ncol, m) = &self.mats[e.mat];
        let q = self.q;
        for k in 0..*ncol {
            let mut s = 0.0;
            for row in 0..q {
                s += m[row * ncol + k] * fc[row];
            }
            if k < q {
                out[k] = s;
            } else {
                up[k - q] = s;
            }
        }
    }

    /// Compares closed forms with the probed Jacobians on `samples` random
    /// vectors per distinct (fast path, Jacobian) pair. Returns the largest
    /// discrepancy per fast path.
    pub fn verify(&self, samples: usize, seed: u64) -> Result<Vec<(FastPath, Role, f64)>, AdjointError> {
        let q = self.q;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen: HashMap<(FastPath, usize), usize> = HashMap::new();
        for (k, e) in self.entries.iter().enumerate() {
            if let Some(p) = e.fast {
                seen.entry((p, e.mat)).or_insert(k);
            }
        }
        let mut keys: Vec<_> = seen.into_iter().collect();
        keys.sort_by_key(|((p, m), _)| (*p as u8, *m));
        let mut report: Vec<(FastPath, Role, f64)> = Vec::new();
        for ((path, _), k) in keys {
            let e = &self.entries[k];
            let mut worst: f64 = 0.0;
            for _ in 0..samples {
                let fc: Vec<f64> = (0..q).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let (mut a, mut au) = (vec![0.0; q], vec![0.0; q]);
                let (mut b, mut bu) = (vec![0.0; q], vec![0.0; q]);
                apply_fast(path, &self.opposite, &fc, &mut a, &mut au);
                self.mechanical_node(e, &fc, &mut b, &mut bu);
                let has_up = e.upstream.is_some();
                for i in 0..q {
                    let pairs = [(a[i], b[i]), if has_up { (au[i], bu[i]) } else { (0.0, 0.0) }];
                    for (x, y) in pairs {
                        let d = (x - y).abs();
                        worst = worst.max(d);
                        if d > 1e-13 {
                            return Err(AdjointError::BoundaryMismatch {
                                node: e.node,
                                role: e.role,
                                direction: i,
                                fast: x,
                                mechanical: y,
                            });
                        }
                    }
                }
            }
            match report.iter_mut().find(|(p, r, _)| *p == path && *r == e.role) {
                Some(r) => r.2 = r.2.max(worst),
                None => report.push((path, e.role, worst)),
            }
        }
        Ok(report)
    }

    /// `out = Bᵀ fc` over the whole field.
    pub fn apply(&self, fc: &[f64], out: &mut [f64]) {
        let q = self.q;
        out.copy_from_slice(fc);
        let mut up = [0.0; 32];
        for e in &self.entries {
            let src = &fc[e.node * q..(e.node + 1) * q];
            let dst = &mut out[e.node * q..(e.node + 1) * q];
            match (self.use_fast, e.fast) {
                (true, Some(p)) => apply_fast(p, &self.opposite, src, dst, &mut up[..q]),
                _ => self.mechanical_node(e, src, dst, &mut up[..q]),
            }
        }
        // Contributions to upstream nodes come after every own-node write.
        for e in &self.entries {
            if let Some(u) = e.upstream {
                let src = &fc[e.node * q..(e.node + 1) * q];
                let mut own = [0.0; 32];
                match (self.use_fast, e.fast) {
                    (true, Some(p)) => apply_fast(p, &self.opposite, src, &mut own[..q], &mut up[..q]),
                    _ => self.mechanical_node(e, src, &mut own[..q], &mut up[..q]),
                }
                for k in 0..q {
                    out[u * q + k] += up[k];
                }
            }
        }
    }
}
