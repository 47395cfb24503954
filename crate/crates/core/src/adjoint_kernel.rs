//! Transposed BGK collision shared by both adjoint solvers.
//!
//! The equilibrium Jacobian is
//! `∂f_m^eq/∂f_i = ω_m [1 + 3α e_m·e_i + 9α² (e_m·u)(e_m·e_i) − 3α² u·e_i]`,
//! so `Σ_m (∂f_m^eq/∂f_i) ψ_m` only needs three weighted moments of `ψ`.

use crate::forward::{dot, with_q, FlowModel};

/// `Σ_m (∂f_m^eq/∂f_i) ψ_m` for every `i` at one node.
pub fn equilibrium_jacobian_transpose(
    psi: &[f64],
    u: [f64; 3],
    alpha: f64,
    e: &[[f64; 3]],
    w: &[f64],
    out: &mut [f64],
) {
    let mut a = 0.0;
    let mut b = [0.0; 3];
    let mut c = [0.0; 3];
    for m in 0..psi.len() {
        let wp = w[m] * psi[m];
        let eu = dot(e[m], u);
        a += wp;
        for k in 0..3 {
            b[k] += wp * e[m][k];
            c[k] += wp * eu * e[m][k];
        }
    }
    let a2 = alpha * alpha;
    for i in 0..psi.len() {
        out[i] = a + 3.0 * alpha * dot(e[i], b) + 9.0 * a2 * dot(e[i], c) - 3.0 * a2 * dot(u, e[i]) * a;
    }
}

/// In-place transposed collision `ψ ← ψ − (1/τ)(ψ − Jᵀψ)` at non-wall nodes.
/// Wall nodes are not collided, so their transpose is the identity.
pub fn collide_adjoint(model: &FlowModel, psi: &mut [f64], u: &[[f64; 3]], alpha: &[f64]) {
    with_q!(model.q(), Q => collide_adjoint_q::<Q>(model, psi, u, alpha))
}

fn collide_adjoint_q<const Q: usize>(model: &FlowModel, psi: &mut [f64], u: &[[f64; 3]], alpha: &[f64]) {
    let e: &[[f64; 3]; Q] = model.stencil().ev().try_into().unwrap();
    let w: &[f64; Q] = model.stencil().weights().try_into().unwrap();
    let omega = 1.0 / model.tau();
    for (((node, v), &al), &act) in psi.chunks_exact_mut(Q).zip(u).zip(alpha).zip(model.active()) {
        if !act {
            continue;
        }
        let node: &mut [f64; Q] = node.try_into().unwrap();
        let mut a = 0.0;
        let mut b = [0.0; 3];
        let mut c = [0.0; 3];
        for m in 0..Q {
            let wp = w[m] * node[m];
            let eu = dot(e[m], *v);
            a += wp;
            b[0] += wp * e[m][0];
            b[1] += wp * e[m][1];
            b[2] += wp * e[m][2];
            c[0] += wp * eu * e[m][0];
            c[1] += wp * eu * e[m][1];
            c[2] += wp * eu * e[m][2];
        }
        let a2 = al * al;
        let k1 = 3.0 * al;
        let k2 = 9.0 * a2;
        let k3 = 3.0 * a2 * a;
        for i in 0..Q {
            let jt = a + k1 * dot(e[i], b) + k2 * dot(e[i], c) - k3 * dot(*v, e[i]);
            node[i] += omega * (jt - node[i]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::equilibrium;
    use crate::lattice::{make_stencil, StencilKind};

    #[test]
    fn rest_jacobian_is_rank_one() {
        let s = make_stencil(StencilKind::D2Q9);
        let psi = vec![2.5; 9];
        let mut out = vec![0.0; 9];
        equilibrium_jacobian_transpose(&psi, [0.0; 3], 0.7, s.ev(), s.weights(), &mut out);
        for v in out {
            assert!((v - 2.5).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_finite_difference_jacobian() {
        for kind in [StencilKind::D2Q9, StencilKind::D3Q19] {
            let s = make_stencil(kind);
            let q = s.q();
            let rho0 = 1.0;
            let alpha = 0.8;
            let f: Vec<f64> = equilibrium(1.01, [0.04, -0.03, 0.02 * (s.dim() as f64 - 2.0)], 1.0, rho0, &s)
                .iter()
                .enumerate()
                .map(|(i, v)| v + 1e-3 * (i as f64).cos())
                .collect();
            let feq = |f: &[f64]| {
                let (r, u) = crate::forward::moments(f, rho0, &s);
                equilibrium(r, u, alpha, rho0, &s)
            };
            let (_, u) = crate::forward::moments(&f, rho0, &s);
            let psi: Vec<f64> = (0..q).map(|i| ((i * 7 + 3) as f64).sin()).collect();
            let mut out = vec![0.0; q];
            equilibrium_jacobian_transpose(&psi, u, alpha, s.ev(), s.weights(), &mut out);
            let h = 1e-6;
            for i in 0..q {
                let mut fp = f.clone();
                fp[i] += h;
                let mut fm = f.clone();
                fm[i] -= h;
                let (ep, em) = (feq(&fp), feq(&fm));
                let col: f64 = (0..q).map(|m| (ep[m] - em[m]) / (2.0 * h) * psi[m]).sum();
                assert!((col - out[i]).abs() < 1e-8, "{kind}: {col} vs {}", out[i]);
            }
        }
    }
}
