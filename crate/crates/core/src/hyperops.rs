//! Differentiable counterparts of the closed-form geometry kernels.
//!
//! These mirror [`crate::geometry`] but operate on tape variables so the
//! whole model — including the curvature itself — stays differentiable.
//! The curvature is passed as a scalar [`Var`], which is how gradients
//! reach the schedule parameters and the learnable global curvature.
//!
//! Branching on forward values (zero inputs, origin points) is fine here:
//! every tape records a single forward pass, so the graph is rebuilt per
//! step and the chosen branch is the one finite differences see too.

use crate::autodiff::{concat, Shape, Tape, Var};
use crate::geometry::{HModel, EPS_BALL};

const ZERO_TOL: f64 = 1e-15;

fn zeros<'t>(tape: &'t Tape, n: usize) -> Var<'t> {
    tape.vector(&vec![0.0; n])
}

/// min of two scalars, built from the elementwise max primitive.
fn smin<'t>(a: Var<'t>, b: Var<'t>) -> Var<'t> {
    a.neg().vmax(b.neg()).neg()
}

/// `sqrt(-c)` for a scalar curvature variable.
fn sqrt_neg_c(c: Var<'_>) -> Var<'_> {
    c.neg().sqrt()
}

/// `K = -1/c` and `sqrt(K)` for the Lorentz model.
fn lorentz_k(c: Var<'_>) -> (Var<'_>, Var<'_>) {
    let one = c.tape().scalar(1.0);
    let k = one.div(c).neg();
    (k, k.sqrt())
}

/// Minkowski inner product of two (d+1)-vectors with signature (-,+,..,+).
pub fn minkowski_inner<'t>(x: Var<'t>, y: Var<'t>) -> Var<'t> {
    let n = match x.shape() {
        Shape::Vector(n) => n,
        other => panic!("minkowski_inner needs vectors, got {:?}", other),
    };
    let time = x.index(0).mul(y.index(0)).neg();
    time.add(x.slice(1, n - 1).dot(y.slice(1, n - 1)))
}

/// Rescale a Poincaré point into the ball with margin [`EPS_BALL`].
/// A no-op (exact identity) for interior points.
pub fn project_ball<'t>(x: Var<'t>, c: Var<'t>) -> Var<'t> {
    let one = x.tape().scalar(1.0);
    let max_r = sqrt_neg_c(c).clamp_min(ZERO_TOL);
    let n = x.norm().clamp_min(ZERO_TOL);
    let f = smin(one, one.mul_const(1.0 - EPS_BALL).div(max_r).div(n));
    x.scale_by(f)
}

/// Möbius addition on the Poincaré ball.
pub fn mobius_add<'t>(x: Var<'t>, y: Var<'t>, c: Var<'t>) -> Var<'t> {
    let xy = x.dot(y);
    let x2 = x.dot(x);
    let y2 = y.dot(y);
    let cxy2 = c.mul(xy).mul_const(-2.0);
    let ax = cxy2.sub(c.mul(y2)).add_const(1.0);
    let ay = c.mul(x2).add_const(1.0);
    let denom = cxy2.add(c.mul(c).mul(x2).mul(y2)).add_const(1.0).clamp_min(ZERO_TOL);
    let out = x.scale_by(ax.div(denom)).add(y.scale_by(ay.div(denom)));
    project_ball(out, c)
}

/// Möbius matrix-vector multiplication; `Mx = 0` and `x = 0` go to the
/// origin with zero gradient, matching the closed-form special case.
pub fn mobius_matvec<'t>(m: Var<'t>, x: Var<'t>, c: Var<'t>) -> Var<'t> {
    let rows = match m.shape() {
        Shape::Matrix(r, _) => r,
        other => panic!("mobius_matvec needs a matrix, got {:?}", other),
    };
    let tape = x.tape();
    if x.norm().scalar_value() < ZERO_TOL {
        return zeros(tape, rows);
    }
    let mx = m.matvec(x);
    if mx.norm().scalar_value() < ZERO_TOL {
        return zeros(tape, rows);
    }
    let sc = sqrt_neg_c(c).clamp_min(ZERO_TOL);
    let xn = x.norm();
    let mxn = mx.norm();
    let scale = mxn.div(xn).mul(sc.mul(xn).atanh()).tanh().div(sc).div(mxn);
    project_ball(mx.scale_by(scale), c)
}

/// Origin of the Lorentz model at curvature `c`: `(sqrt(K), 0, ..., 0)`.
pub fn lorentz_origin<'t>(c: Var<'t>, dim: usize) -> Var<'t> {
    let (_, sk) = lorentz_k(c);
    let tail = zeros(c.tape(), dim);
    concat(c.tape(), &[sk, tail])
}

/// Pull the time coordinate back onto the hyperboloid from the spatial
/// part. Keeps long op chains within the manifold tolerance.
fn lorentz_renormalize<'t>(spatial: Var<'t>, c: Var<'t>) -> Var<'t> {
    let (k, _) = lorentz_k(c);
    let x0 = k.add(spatial.dot(spatial)).sqrt();
    concat(spatial.tape(), &[x0, spatial])
}

/// Exponential map at a general Lorentz point.
pub fn lorentz_exp<'t>(x: Var<'t>, v: Var<'t>, c: Var<'t>) -> Var<'t> {
    let n = match x.shape() {
        Shape::Vector(n) => n,
        other => panic!("lorentz_exp needs vectors, got {:?}", other),
    };
    let vn2 = minkowski_inner(v, v).clamp_min(0.0);
    if vn2.scalar_value().sqrt() < ZERO_TOL {
        return x;
    }
    let vn = vn2.clamp_min(ZERO_TOL * ZERO_TOL).sqrt();
    let (_, sk) = lorentz_k(c);
    let arg = vn.div(sk);
    let out = x.scale_by(arg.cosh()).add(v.scale_by(sk.mul(arg.sinh()).div(vn)));
    lorentz_renormalize(out.slice(1, n - 1), c)
}

/// Logarithmic map at a general Lorentz point.
pub fn lorentz_log<'t>(x: Var<'t>, y: Var<'t>, c: Var<'t>) -> Var<'t> {
    let n = match x.shape() {
        Shape::Vector(n) => n,
        other => panic!("lorentz_log needs vectors, got {:?}", other),
    };
    let (k, sk) = lorentz_k(c);
    let inner = minkowski_inner(x, y);
    let arg = inner.neg().div(k);
    // arg <= 1 only at coincident points (or from rounding just below);
    // a fixed epsilon above 1 would be wrong here, since near-flat
    // curvature scales distances by sqrt(K) and would zero out real
    // displacements.
    if arg.scalar_value() <= 1.0 {
        return zeros(x.tape(), n);
    }
    let dist = sk.mul(arg.acosh());
    let u = y.add(x.scale_by(inner.div(k)));
    let un = minkowski_inner(u, u).clamp_min(ZERO_TOL).sqrt();
    u.scale_by(dist.div(un))
}

/// Logarithmic map at the Lorentz origin, returned as a full tangent
/// vector with a zero time part. Expressed through asinh of the spatial
/// norm, which stays accurate and smoothly differentiable for points
/// arbitrarily close to the origin, where the acosh form loses all
/// precision and its derivative blows up.
pub fn lorentz_log_origin<'t>(y: Var<'t>, c: Var<'t>) -> Var<'t> {
    let n = match y.shape() {
        Shape::Vector(n) => n,
        other => panic!("lorentz_log_origin needs a vector, got {:?}", other),
    };
    let spatial = y.slice(1, n - 1);
    let sn = spatial.norm();
    if sn.scalar_value() < ZERO_TOL {
        return zeros(y.tape(), n);
    }
    let (_, sk) = lorentz_k(c);
    let dist = sk.mul(sn.div(sk).asinh());
    concat(y.tape(), &[zeros(y.tape(), 1), spatial.scale_by(dist.div(sn))])
}

/// Parallel transport of a tangent vector from the Lorentz origin to `x`.
pub fn lorentz_transport_from_origin<'t>(x: Var<'t>, v: Var<'t>, c: Var<'t>) -> Var<'t> {
    let dim = match x.shape() {
        Shape::Vector(n) => n - 1,
        other => panic!("transport needs vectors, got {:?}", other),
    };
    let (k, _) = lorentz_k(c);
    let o = lorentz_origin(c, dim);
    let xv = minkowski_inner(x, v);
    let ox = minkowski_inner(o, x);
    let f = xv.div(k.sub(ox));
    v.add(o.add(x).scale_by(f))
}

/// Exponential map at the origin, from a Euclidean tangent vector.
pub fn lift<'t>(v: Var<'t>, c: Var<'t>, model: HModel) -> Var<'t> {
    let d = match v.shape() {
        Shape::Vector(n) => n,
        other => panic!("lift needs a vector, got {:?}", other),
    };
    match model {
        HModel::PoincareBall => {
            if v.norm().scalar_value() < ZERO_TOL {
                return zeros(v.tape(), d);
            }
            let sc = sqrt_neg_c(c).clamp_min(ZERO_TOL);
            let n = v.norm();
            let scn = sc.mul(n);
            v.scale_by(scn.tanh().div(scn))
        }
        HModel::Lorentz => {
            if v.norm().scalar_value() < ZERO_TOL {
                return lorentz_origin(c, d);
            }
            let (_, sk) = lorentz_k(c);
            let n = v.norm();
            let arg = n.div(sk);
            let spatial = v.scale_by(sk.mul(arg.sinh()).div(n));
            lorentz_renormalize(spatial, c)
        }
    }
}

/// Logarithm at the origin; inverse of [`lift`] on its image.
pub fn drop<'t>(x: Var<'t>, c: Var<'t>, model: HModel) -> Var<'t> {
    match model {
        HModel::PoincareBall => {
            let d = match x.shape() {
                Shape::Vector(n) => n,
                other => panic!("drop needs a vector, got {:?}", other),
            };
            if x.norm().scalar_value() < ZERO_TOL {
                return zeros(x.tape(), d);
            }
            let sc = sqrt_neg_c(c).clamp_min(ZERO_TOL);
            let n = x.norm();
            let scn = sc.mul(n);
            x.scale_by(scn.atanh().div(scn))
        }
        HModel::Lorentz => {
            let d = match x.shape() {
                Shape::Vector(n) => n - 1,
                other => panic!("drop needs a vector, got {:?}", other),
            };
            let spatial = x.slice(1, d);
            let sn = spatial.norm();
            if sn.scalar_value() < ZERO_TOL {
                return zeros(x.tape(), d);
            }
            // log at the origin collapses to a rescale of the spatial
            // part; see lorentz_log_origin for the choice of asinh
            let (_, sk) = lorentz_k(c);
            let dist = sk.mul(sn.div(sk).asinh());
            spatial.scale_by(dist.div(sn))
        }
    }
}

/// Curvature transition `T_{c_from}^{c_to} = lift(drop(·, c_from), c_to)`.
pub fn transition<'t>(x: Var<'t>, c_from: Var<'t>, c_to: Var<'t>, model: HModel) -> Var<'t> {
    lift(drop(x, c_from, model), c_to, model)
}

/// Hyperbolic addition for either backend.
pub fn hyp_add<'t>(x: Var<'t>, y: Var<'t>, c: Var<'t>, model: HModel) -> Var<'t> {
    match model {
        HModel::PoincareBall => mobius_add(x, y, c),
        HModel::Lorentz => {
            let v = lorentz_log_origin(y, c);
            let pv = lorentz_transport_from_origin(x, v, c);
            lorentz_exp(x, pv, c)
        }
    }
}

/// Hyperbolic matrix-vector multiplication for either backend. The matrix
/// acts on tangent coordinates at the origin, so it is `d x d` for both
/// models.
pub fn hyp_matvec<'t>(m: Var<'t>, x: Var<'t>, c: Var<'t>, model: HModel) -> Var<'t> {
    match model {
        HModel::PoincareBall => mobius_matvec(m, x, c),
        HModel::Lorentz => lift(m.matvec(drop(x, c, HModel::Lorentz)), c, HModel::Lorentz),
    }
}

/// Pointwise tanh nonlinearity applied in the tangent space at the
/// origin: `lift(tanh(drop(x)))`.
pub fn hyp_tanh<'t>(x: Var<'t>, c: Var<'t>, model: HModel) -> Var<'t> {
    lift(drop(x, c, model).tanh(), c, model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{grad_check, Tensor};
    use crate::geometry::{self, HPoint, Mat};

    fn close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{:?} vs {:?}", a, b);
        }
    }

    #[test]
    fn poincare_forward_agrees_with_closed_form() {
        let tape = Tape::new();
        let c = tape.scalar(-1.3);
        let x = tape.vector(&[0.3, -0.2, 0.1]);
        let y = tape.vector(&[-0.1, 0.25, 0.2]);
        let got = mobius_add(x, y, c).value();
        let xp = HPoint::poincare(-1.3, vec![0.3, -0.2, 0.1]).unwrap();
        let yp = HPoint::poincare(-1.3, vec![-0.1, 0.25, 0.2]).unwrap();
        let want = geometry::mobius_add(&xp, &yp).unwrap();
        close(&got.data, &want.coords, 1e-14);

        let m = tape.matrix(3, 3, &[0.5, 0.1, 0.0, -0.2, 0.8, 0.3, 0.0, 0.4, 0.9]);
        let got = mobius_matvec(m, x, c).value();
        let mm = Mat::new(3, 3, vec![0.5, 0.1, 0.0, -0.2, 0.8, 0.3, 0.0, 0.4, 0.9]);
        let want = geometry::mobius_matvec(&mm, &xp).unwrap();
        close(&got.data, &want.coords, 1e-14);
    }

    #[test]
    fn lorentz_forward_agrees_with_closed_form() {
        let c = -0.7;
        let xt = geometry::lift(&[0.4, -0.1, 0.2], c, HModel::Lorentz).unwrap();
        let yt = geometry::lift(&[-0.2, 0.3, 0.1], c, HModel::Lorentz).unwrap();

        let tape = Tape::new();
        let cv = tape.scalar(c);
        let x = tape.leaf(Tensor::vector(xt.coords.clone()));
        let y = tape.leaf(Tensor::vector(yt.coords.clone()));

        let got = hyp_add(x, y, cv, HModel::Lorentz).value();
        let want = geometry::lorentz_add(&xt, &yt).unwrap();
        close(&got.data, &want.coords, 1e-10);

        let m = tape.matrix(3, 3, &[0.5, 0.1, 0.0, -0.2, 0.8, 0.3, 0.0, 0.4, 0.9]);
        let got = hyp_matvec(m, x, cv, HModel::Lorentz).value();
        let mm = Mat::new(3, 3, vec![0.5, 0.1, 0.0, -0.2, 0.8, 0.3, 0.0, 0.4, 0.9]);
        let want = geometry::lorentz_matvec(&mm, &xt).unwrap();
        close(&got.data, &want.coords, 1e-10);
    }

    #[test]
    fn lift_drop_transition_agree_with_closed_form() {
        for model in [HModel::PoincareBall, HModel::Lorentz] {
            let tape = Tape::new();
            let c = tape.scalar(-1.5);
            let c2 = tape.scalar(-0.5);
            let v = tape.vector(&[0.4, -0.3]);
            let x = lift(v, c, model);
            let want = geometry::lift(&[0.4, -0.3], -1.5, model).unwrap();
            close(&x.value().data, &want.coords, 1e-12);

            let back = drop(x, c, model);
            close(&back.value().data, &geometry::drop(&want), 1e-10);

            let moved = transition(x, c, c2, model);
            let want2 = geometry::transition(&want, -0.5).unwrap();
            close(&moved.value().data, &want2.coords, 1e-10);
        }
    }

    #[test]
    fn gradients_match_finite_differences_poincare() {
        let inputs = vec![
            Tensor::vector(vec![0.3, -0.2, 0.1]),
            Tensor::vector(vec![-0.1, 0.25, 0.2]),
            Tensor::scalar(-1.3),
            Tensor::matrix(3, 3, vec![0.5, 0.1, 0.0, -0.2, 0.8, 0.3, 0.0, 0.4, 0.9]),
        ];
        let report = grad_check(
            |_tape, vars| {
                let (x, y, c, m) = (vars[0], vars[1], vars[2], vars[3]);
                let s = mobius_add(x, y, c);
                let t = mobius_matvec(m, s, c);
                let u = transition(t, c, c.mul_const(2.0), HModel::PoincareBall);
                u.dot(u)
            },
            &inputs,
            1e-6,
            1e-4,
        );
        assert!(report.pass(), "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn gradients_match_finite_differences_lorentz() {
        // tangent inputs, lifted on-tape so perturbations stay on-manifold
        let inputs = vec![
            Tensor::vector(vec![0.4, -0.1, 0.2]),
            Tensor::vector(vec![-0.2, 0.3, 0.1]),
            Tensor::scalar(-0.7),
            Tensor::matrix(3, 3, vec![0.5, 0.1, 0.0, -0.2, 0.8, 0.3, 0.0, 0.4, 0.9]),
        ];
        let report = grad_check(
            |_tape, vars| {
                let (vx, vy, c, m) = (vars[0], vars[1], vars[2], vars[3]);
                let x = lift(vx, c, HModel::Lorentz);
                let y = lift(vy, c, HModel::Lorentz);
                let s = hyp_add(x, y, c, HModel::Lorentz);
                let t = hyp_matvec(m, s, c, HModel::Lorentz);
                let u = hyp_tanh(t, c, HModel::Lorentz);
                let w = transition(u, c, c.mul_const(0.5), HModel::Lorentz);
                w.dot(w)
            },
            &inputs,
            1e-6,
            1e-4,
        );
        assert!(report.pass(), "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn transition_to_same_curvature_has_identity_gradient() {
        let inputs = vec![Tensor::vector(vec![0.3, -0.2, 0.15])];
        // objective through transition(x, c, c) vs directly on x
        let through = grad_check(
            |tape, vars| {
                let c = tape.scalar(-1.0);
                let x = lift(vars[0], c, HModel::PoincareBall);
                let y = transition(x, c, c, HModel::PoincareBall);
                y.dot(y)
            },
            &inputs,
            1e-6,
            1e-4,
        );
        assert!(through.pass(), "max rel err {}", through.max_rel_err);

        let tape = Tape::new();
        let c = tape.scalar(-1.0);
        let v = tape.vector(&[0.3, -0.2, 0.15]);
        let x = lift(v, c, HModel::PoincareBall);
        let y = transition(x, c, c, HModel::PoincareBall);
        let g1 = tape.backward(y.dot(y)).unwrap().wrt(v);

        let tape2 = Tape::new();
        let c2 = tape2.scalar(-1.0);
        let v2 = tape2.vector(&[0.3, -0.2, 0.15]);
        let x2 = lift(v2, c2, HModel::PoincareBall);
        let g2 = tape2.backward(x2.dot(x2)).unwrap().wrt(v2);
        close(&g1.data, &g2.data, 1e-8);
    }

    #[test]
    fn zero_cases_map_to_origin() {
        let tape = Tape::new();
        let c = tape.scalar(-1.0);
        let z = tape.vector(&[0.0, 0.0]);
        assert_eq!(lift(z, c, HModel::PoincareBall).value().data, vec![0.0, 0.0]);
        let lo = lift(z, c, HModel::Lorentz).value();
        assert_eq!(lo.data, vec![1.0, 0.0, 0.0]);
        let m = tape.matrix(2, 2, &[0.0; 4]);
        let x = tape.vector(&[0.3, 0.1]);
        assert_eq!(mobius_matvec(m, x, c).value().data, vec![0.0, 0.0]);
    }
}
