//! Closed-form operations on the Poincaré-ball and Lorentz models of
//! hyperbolic space, plus the curvature-transition maps between spaces of
//! different curvature.
//!
//! Conventions fixed here:
//! - Curvature `c` is always strictly negative. The Lorentz model uses
//!   `K = -1/c`.
//! - Minkowski signature is (-, +, ..., +) with the time coordinate at
//!   index 0.
//! - Poincaré points are projected to radius `(1 - EPS_BALL) / sqrt(-c)`
//!   whenever an operation would push them onto the boundary.

use thiserror::Error;

/// Margin keeping Poincaré points strictly inside the ball.
pub const EPS_BALL: f64 = 1e-5;
/// Tolerance on the Lorentz invariant `<x,x>_L = c`.
pub const EPS_LORENTZ: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("curvature mismatch: {0} vs {1}")]
    CurvatureMismatch(f64, f64),
    #[error("model mismatch")]
    ModelMismatch,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("non-finite input")]
    NonFinite,
    #[error("curvature must be negative, got {0}")]
    NonNegativeCurvature(f64),
    #[error("point does not satisfy the Lorentz invariant (defect {0})")]
    NotOnHyperboloid(f64),
    #[error("vector is not tangent at the base point (defect {0})")]
    NotTangent(f64),
}

pub type Result<T> = std::result::Result<T, GeometryError>;

/// Which realization of hyperbolic space a point lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HModel {
    PoincareBall,
    Lorentz,
}

/// A point in hyperbolic space, tagged with its model and curvature.
///
/// Poincaré coordinates have length `d`; Lorentz coordinates have length
/// `d + 1` with the time coordinate first.
#[derive(Clone, Debug, PartialEq)]
pub struct HPoint {
    pub model: HModel,
    pub curvature: f64,
    pub coords: Vec<f64>,
}

/// A tangent vector anchored at a point of the manifold.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    pub at: HPoint,
    pub coords: Vec<f64>,
}

fn check_curvature(c: f64) -> Result<()> {
    if !c.is_finite() || c >= 0.0 {
        return Err(GeometryError::NonNegativeCurvature(c));
    }
    Ok(())
}

fn check_finite(v: &[f64]) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    Ok(())
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl HPoint {
    /// Poincaré-ball point; coords are projected inside the ball with
    /// margin [`EPS_BALL`] if needed.
    pub fn poincare(c: f64, coords: Vec<f64>) -> Result<HPoint> {
        check_curvature(c)?;
        check_finite(&coords)?;
        let mut p = HPoint { model: HModel::PoincareBall, curvature: c, coords };
        p.project_into_ball();
        Ok(p)
    }

    /// Lorentz point; the invariant `<x,x>_L = -K` with `K = -1/c` must
    /// hold within [`EPS_LORENTZ`] and `x_0 > 0`. With `K = -1/c` the
    /// hyperboloid has sectional curvature `c` and flattens as `c -> 0`;
    /// at `c = -1` the invariant coincides with `<x,x>_L = c`.
    pub fn lorentz(c: f64, coords: Vec<f64>) -> Result<HPoint> {
        check_curvature(c)?;
        check_finite(&coords)?;
        if coords.len() < 2 {
            return Err(GeometryError::DimensionMismatch(coords.len(), 2));
        }
        let k = -1.0 / c;
        let inner = minkowski_inner(&coords, &coords)?;
        let defect = (inner + k).abs();
        if defect > EPS_LORENTZ * (1.0 + k) || coords[0] <= 0.0 {
            return Err(GeometryError::NotOnHyperboloid(defect));
        }
        Ok(HPoint { model: HModel::Lorentz, curvature: c, coords })
    }

    /// Origin of the `d`-dimensional space of curvature `c`:
    /// the zero vector (Poincaré) or `(sqrt(K), 0, ..., 0)` (Lorentz).
    pub fn origin(model: HModel, c: f64, dim: usize) -> Result<HPoint> {
        check_curvature(c)?;
        let coords = match model {
            HModel::PoincareBall => vec![0.0; dim],
            HModel::Lorentz => {
                let mut v = vec![0.0; dim + 1];
                v[0] = (-1.0 / c).sqrt();
                v
            }
        };
        Ok(HPoint { model, curvature: c, coords })
    }

    /// Embedding dimension `d` (excludes the Lorentz time coordinate).
    pub fn dim(&self) -> usize {
        match self.model {
            HModel::PoincareBall => self.coords.len(),
            HModel::Lorentz => self.coords.len() - 1,
        }
    }

    pub fn is_origin(&self) -> bool {
        match self.model {
            HModel::PoincareBall => self.coords.iter().all(|x| *x == 0.0),
            HModel::Lorentz => self.coords[1..].iter().all(|x| *x == 0.0),
        }
    }

    fn project_into_ball(&mut self) {
        debug_assert_eq!(self.model, HModel::PoincareBall);
        let max_r = (1.0 - EPS_BALL) / (-self.curvature).sqrt();
        let n = sq_norm(&self.coords).sqrt();
        if n > max_r {
            let s = max_r / n;
            for x in &mut self.coords {
                *x *= s;
            }
        }
    }

    fn same_space(&self, other: &HPoint) -> Result<()> {
        if self.model != other.model {
            return Err(GeometryError::ModelMismatch);
        }
        if self.curvature != other.curvature {
            return Err(GeometryError::CurvatureMismatch(self.curvature, other.curvature));
        }
        if self.coords.len() != other.coords.len() {
            return Err(GeometryError::DimensionMismatch(self.coords.len(), other.coords.len()));
        }
        Ok(())
    }
}

impl TangentVector {
    /// Tangent vector at a Lorentz point; tangency `<at, v>_L = 0` is
    /// checked within [`EPS_LORENTZ`].
    pub fn at_lorentz(at: HPoint, coords: Vec<f64>) -> Result<TangentVector> {
        check_finite(&coords)?;
        let inner = minkowski_inner(&at.coords, &coords)?;
        let scale = 1.0 + sq_norm(&coords).sqrt() * sq_norm(&at.coords).sqrt();
        if inner.abs() > EPS_LORENTZ * scale {
            return Err(GeometryError::NotTangent(inner.abs()));
        }
        Ok(TangentVector { at, coords })
    }

    pub fn zero_at(at: HPoint) -> TangentVector {
        let coords = vec![0.0; at.coords.len()];
        TangentVector { at, coords }
    }

    /// Minkowski norm `sqrt(<v,v>_L)` of a tangent vector (clamped at 0).
    pub fn lorentz_norm(&self) -> f64 {
        minkowski_inner(&self.coords, &self.coords).map(|s| s.max(0.0).sqrt()).unwrap_or(0.0)
    }
}

/// Minkowski inner product with signature (-, +, ..., +).
pub fn minkowski_inner(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(GeometryError::DimensionMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(GeometryError::DimensionMismatch(x.len(), 2));
    }
    Ok(-x[0] * y[0] + dot(&x[1..], &y[1..]))
}

/// Möbius addition `x ⊕_c y` on the Poincaré ball.
pub fn mobius_add(x: &HPoint, y: &HPoint) -> Result<HPoint> {
    if x.model != HModel::PoincareBall || y.model != HModel::PoincareBall {
        return Err(GeometryError::ModelMismatch);
    }
    x.same_space(y)?;
    let c = x.curvature;
    let xy = dot(&x.coords, &y.coords);
    let x2 = sq_norm(&x.coords);
    let y2 = sq_norm(&y.coords);
    let ax = 1.0 - 2.0 * c * xy - c * y2;
    let ay = 1.0 + c * x2;
    let denom = 1.0 - 2.0 * c * xy + c * c * x2 * y2;
    let coords = x
        .coords
        .iter()
        .zip(&y.coords)
        .map(|(xi, yi)| (ax * xi + ay * yi) / denom)
        .collect();
    HPoint::poincare(c, coords)
}

/// Möbius matrix-vector multiplication `M ⊗_c x` on the Poincaré ball.
/// `M x = 0` (and `x = 0`) map to the origin.
pub fn mobius_matvec(m: &Mat, x: &HPoint) -> Result<HPoint> {
    if x.model != HModel::PoincareBall {
        return Err(GeometryError::ModelMismatch);
    }
    if m.cols != x.coords.len() {
        return Err(GeometryError::DimensionMismatch(m.cols, x.coords.len()));
    }
    let c = x.curvature;
    let xn = sq_norm(&x.coords).sqrt();
    if xn == 0.0 {
        return HPoint::poincare(c, vec![0.0; m.rows]);
    }
    let mx = m.apply(&x.coords);
    check_finite(&mx)?;
    let mxn = sq_norm(&mx).sqrt();
    if mxn == 0.0 {
        return HPoint::poincare(c, vec![0.0; m.rows]);
    }
    let sc = (-c).sqrt();
    let scale = (1.0 / sc) * ((mxn / xn) * (sc * xn).atanh()).tanh() / mxn;
    HPoint::poincare(c, mx.iter().map(|v| v * scale).collect())
}

/// Row-major dense matrix used by the closed-form geometry ops.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Mat {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Mat { rows, cols, data }
    }

    pub fn identity(n: usize) -> Mat {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Mat { rows: n, cols: n, data }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| dot(&self.data[i * self.cols..(i + 1) * self.cols], v))
            .collect()
    }
}

/// Exponential map on the Lorentz model:
/// `exp_x(v) = cosh(|v|_L/√K) x + √K sinh(|v|_L/√K) v/|v|_L`.
pub fn lorentz_exp(x: &HPoint, v: &TangentVector) -> Result<HPoint> {
    if x.model != HModel::Lorentz {
        return Err(GeometryError::ModelMismatch);
    }
    if v.coords.len() != x.coords.len() {
        return Err(GeometryError::DimensionMismatch(v.coords.len(), x.coords.len()));
    }
    check_finite(&v.coords)?;
    let tangency = minkowski_inner(&x.coords, &v.coords)?;
    let scale = 1.0 + sq_norm(&v.coords).sqrt() * sq_norm(&x.coords).sqrt();
    if tangency.abs() > EPS_LORENTZ * scale {
        return Err(GeometryError::NotTangent(tangency.abs()));
    }
    let k = -1.0 / x.curvature;
    let sk = k.sqrt();
    let vn = v.lorentz_norm();
    if vn == 0.0 {
        return Ok(x.clone());
    }
    let ch = (vn / sk).cosh();
    let sh = (vn / sk).sinh();
    let coords = x
        .coords
        .iter()
        .zip(&v.coords)
        .map(|(xi, vi)| ch * xi + sk * sh * vi / vn)
        .collect();
    lorentz_renormalize(x.curvature, coords)
}

// Exact arithmetic drifts off the hyperboloid after long op chains; pull
// the time coordinate back so downstream invariant checks stay within
// tolerance.
fn lorentz_renormalize(c: f64, mut coords: Vec<f64>) -> Result<HPoint> {
    check_finite(&coords)?;
    let k = -1.0 / c;
    coords[0] = (k + sq_norm(&coords[1..])).sqrt();
    HPoint::lorentz(c, coords)
}

/// Logarithmic map on the Lorentz model, inverse of [`lorentz_exp`].
pub fn lorentz_log(x: &HPoint, y: &HPoint) -> Result<TangentVector> {
    if x.model != HModel::Lorentz {
        return Err(GeometryError::ModelMismatch);
    }
    x.same_space(y)?;
    let k = -1.0 / x.curvature;
    let d = lorentz_distance(x, y)?;
    if d == 0.0 {
        return Ok(TangentVector::zero_at(x.clone()));
    }
    let inner = minkowski_inner(&x.coords, &y.coords)?;
    let u: Vec<f64> =
        y.coords.iter().zip(&x.coords).map(|(yi, xi)| yi + inner / k * xi).collect();
    let un = minkowski_inner(&u, &u)?.max(0.0).sqrt();
    if un == 0.0 {
        return Ok(TangentVector::zero_at(x.clone()));
    }
    let coords = u.iter().map(|ui| d * ui / un).collect();
    Ok(TangentVector { at: x.clone(), coords })
}

/// Geodesic distance `d_L(x,y) = √K arcosh(-<x,y>_L / K)` on the Lorentz
/// model. Arguments at or below 1 (coincident points, or rounding just
/// under) return 0; exactly equal points return 0 without arithmetic.
pub fn lorentz_distance(x: &HPoint, y: &HPoint) -> Result<f64> {
    if x.model != HModel::Lorentz {
        return Err(GeometryError::ModelMismatch);
    }
    x.same_space(y)?;
    if x.coords == y.coords {
        return Ok(0.0);
    }
    let k = -1.0 / x.curvature;
    let arg = -minkowski_inner(&x.coords, &y.coords)? / k;
    if arg <= 1.0 {
        return Ok(0.0);
    }
    Ok(k.sqrt() * arg.acosh())
}

/// Parallel transport of a tangent vector from the hyperboloid origin
/// `o = (√K, 0, ..., 0)` to `x`.
pub fn parallel_transport_origin(x: &HPoint, v: &TangentVector) -> Result<TangentVector> {
    if x.model != HModel::Lorentz {
        return Err(GeometryError::ModelMismatch);
    }
    let o = HPoint::origin(HModel::Lorentz, x.curvature, x.dim())?;
    if v.coords.len() != x.coords.len() {
        return Err(GeometryError::DimensionMismatch(v.coords.len(), x.coords.len()));
    }
    let k = -1.0 / x.curvature;
    let inner = minkowski_inner(&x.coords, &x.coords)?;
    if (inner + k).abs() > EPS_LORENTZ * (1.0 + k) {
        return Err(GeometryError::NotOnHyperboloid((inner + k).abs()));
    }
    // P_{o->x}(v) = v + <x, v>_L / (K - <o, x>_L) * (o + x)
    let xv = minkowski_inner(&x.coords, &v.coords)?;
    let ox = minkowski_inner(&o.coords, &x.coords)?;
    let f = xv / (k - ox);
    let coords = v
        .coords
        .iter()
        .zip(o.coords.iter().zip(&x.coords))
        .map(|(vi, (oi, xi))| vi + f * (oi + xi))
        .collect();
    Ok(TangentVector { at: x.clone(), coords })
}

/// Lorentz addition `x ⊕^K y = exp_x(P_{o→x}(log_o(y)))`.
pub fn lorentz_add(x: &HPoint, y: &HPoint) -> Result<HPoint> {
    let o = HPoint::origin(HModel::Lorentz, x.curvature, x.dim())?;
    let v = lorentz_log(&o, y)?;
    let pv = parallel_transport_origin(x, &v)?;
    lorentz_exp(x, &pv)
}

/// Lorentz matrix-vector multiplication `M ⊗^K x = exp_o(M log_o(x))`.
/// `M` acts on the spatial tangent coordinates at the origin, so it is
/// `d x d`.
pub fn lorentz_matvec(m: &Mat, x: &HPoint) -> Result<HPoint> {
    if x.model != HModel::Lorentz {
        return Err(GeometryError::ModelMismatch);
    }
    if m.cols != x.dim() {
        return Err(GeometryError::DimensionMismatch(m.cols, x.dim()));
    }
    let o = HPoint::origin(HModel::Lorentz, x.curvature, x.dim())?;
    let v = lorentz_log(&o, x)?;
    let mv = m.apply(&v.coords[1..]);
    check_finite(&mv)?;
    let mut coords = vec![0.0];
    coords.extend_from_slice(&mv);
    let o_out = HPoint::origin(HModel::Lorentz, x.curvature, m.rows)?;
    let tv = TangentVector { at: o_out.clone(), coords };
    lorentz_exp(&o_out, &tv)
}

/// Exponential map at the origin: interprets a Euclidean vector as a
/// tangent vector at the origin of the space with curvature `c` and maps
/// it onto the manifold. `lift(0) = origin`.
pub fn lift(v: &[f64], c: f64, model: HModel) -> Result<HPoint> {
    check_curvature(c)?;
    check_finite(v)?;
    let n = sq_norm(v).sqrt();
    match model {
        HModel::PoincareBall => {
            if n == 0.0 {
                return HPoint::origin(model, c, v.len());
            }
            let sc = (-c).sqrt();
            let scale = (sc * n).tanh() / (sc * n);
            HPoint::poincare(c, v.iter().map(|x| x * scale).collect())
        }
        HModel::Lorentz => {
            let o = HPoint::origin(model, c, v.len())?;
            if n == 0.0 {
                return Ok(o);
            }
            let mut coords = vec![0.0];
            coords.extend_from_slice(v);
            let tv = TangentVector { at: o.clone(), coords };
            lorentz_exp(&o, &tv)
        }
    }
}

/// Logarithm at the origin; inverse of [`lift`] on its image.
pub fn drop(x: &HPoint) -> Vec<f64> {
    match x.model {
        HModel::PoincareBall => {
            let n = sq_norm(&x.coords).sqrt();
            if n == 0.0 {
                return vec![0.0; x.coords.len()];
            }
            let sc = (-x.curvature).sqrt();
            let scale = (sc * n).min(1.0 - 1e-15).atanh() / (sc * n);
            x.coords.iter().map(|v| v * scale).collect()
        }
        HModel::Lorentz => {
            // asinh of the spatial norm stays exact near the origin,
            // where acosh of the time coordinate rounds to zero
            let spatial = &x.coords[1..];
            let sn = sq_norm(spatial).sqrt();
            if sn == 0.0 {
                return vec![0.0; x.dim()];
            }
            let sk = (-1.0 / x.curvature).sqrt();
            let scale = sk * (sn / sk).asinh() / sn;
            spatial.iter().map(|v| v * scale).collect()
        }
    }
}

/// Curvature transition `T_{c_from}^{c_to}(x) = lift(drop(x), c_to)`.
/// Transitioning to the same curvature is (near-)exact, and transitions
/// compose: `T_{c2}^{c3} ∘ T_{c1}^{c2} = T_{c1}^{c3}`.
pub fn transition(x: &HPoint, c_to: f64) -> Result<HPoint> {
    check_curvature(c_to)?;
    if c_to == x.curvature {
        return Ok(x.clone());
    }
    lift(&drop(x), c_to, x.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use twofloat::TwoFloat;

    fn p(c: f64, coords: &[f64]) -> HPoint {
        HPoint::poincare(c, coords.to_vec()).unwrap()
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{:?} vs {:?}", a, b);
        }
    }

    #[test]
    fn mobius_add_right_identity() {
        let x = p(-1.0, &[0.3, -0.2]);
        let o = p(-1.0, &[0.0, 0.0]);
        let r = mobius_add(&x, &o).unwrap();
        assert_close(&r.coords, &x.coords, 1e-15);
    }

    #[test]
    fn mobius_add_inverse_gives_origin() {
        let x = p(-1.0, &[0.3, -0.2]);
        let nx = p(-1.0, &[-0.3, 0.2]);
        let r = mobius_add(&x, &nx).unwrap();
        assert_close(&r.coords, &[0.0, 0.0], 1e-15);
    }

    #[test]
    fn mobius_add_rejects_mismatches() {
        let x = p(-1.0, &[0.1, 0.0]);
        let y = p(-2.0, &[0.1, 0.0]);
        assert!(matches!(mobius_add(&x, &y), Err(GeometryError::CurvatureMismatch(_, _))));
        let l = HPoint::origin(HModel::Lorentz, -1.0, 2).unwrap();
        assert_eq!(mobius_add(&x, &l), Err(GeometryError::ModelMismatch));
    }

    // Extended-precision evaluation of the Möbius addition closed form.
    fn mobius_add_oracle(x: &[f64], y: &[f64], c: f64) -> Vec<f64> {
        let c = TwoFloat::from(c);
        let xs: Vec<TwoFloat> = x.iter().map(|v| TwoFloat::from(*v)).collect();
        let ys: Vec<TwoFloat> = y.iter().map(|v| TwoFloat::from(*v)).collect();
        let mut xy = TwoFloat::from(0.0);
        let mut x2 = TwoFloat::from(0.0);
        let mut y2 = TwoFloat::from(0.0);
        for i in 0..xs.len() {
            xy = xy + xs[i] * ys[i];
            x2 = x2 + xs[i] * xs[i];
            y2 = y2 + ys[i] * ys[i];
        }
        let one = TwoFloat::from(1.0);
        let two = TwoFloat::from(2.0);
        let ax = one - two * c * xy - c * y2;
        let ay = one + c * x2;
        let denom = one - two * c * xy + c * c * x2 * y2;
        (0..xs.len()).map(|i| f64::from((ax * xs[i] + ay * ys[i]) / denom)).collect()
    }

    #[test]
    fn mobius_add_matches_extended_precision_oracle() {
        let x = p(-1.0, &[0.3, 0.0]);
        let y = p(-1.0, &[0.0, 0.4]);
        let got = mobius_add(&x, &y).unwrap();
        let want = mobius_add_oracle(&[0.3, 0.0], &[0.0, 0.4], -1.0);
        assert_close(&got.coords, &want, 1e-12);
    }

    #[test]
    fn mobius_matvec_identity_and_zero() {
        let x = p(-1.0, &[0.1, 0.2]);
        let id = Mat::identity(2);
        let r = mobius_matvec(&id, &x).unwrap();
        assert_close(&r.coords, &x.coords, 1e-14);

        let o = p(-1.0, &[0.0, 0.0]);
        let r = mobius_matvec(&id, &o).unwrap();
        assert!(r.is_origin());

        let zero = Mat::new(2, 2, vec![0.0; 4]);
        let r = mobius_matvec(&zero, &x).unwrap();
        assert!(r.is_origin());
    }

    #[test]
    fn mobius_matvec_matches_extended_precision_oracle() {
        let x = p(-1.0, &[0.1, 0.2]);
        let m = Mat::new(2, 2, vec![2.0, 0.0, 0.0, 2.0]);
        let got = mobius_matvec(&m, &x).unwrap();
        // diag(2,2): scale = tanh(2 atanh(|x|)) / |x|, computed in TwoFloat
        let xn = TwoFloat::from(0.1f64 * 0.1 + 0.2 * 0.2).sqrt();
        let scale = (TwoFloat::from(2.0) * xn.atanh()).tanh() / xn / TwoFloat::from(2.0);
        let want = [f64::from(TwoFloat::from(0.2) * scale), f64::from(TwoFloat::from(0.4) * scale)];
        assert_close(&got.coords, &want, 1e-12);
    }

    #[test]
    fn minkowski_inner_examples() {
        assert_eq!(minkowski_inner(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]).unwrap(), -1.0);
        assert_eq!(minkowski_inner(&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(minkowski_inner(&[2.0, 1.0, 1.0], &[3.0, 1.0, 2.0]).unwrap(), -3.0);
        assert!(minkowski_inner(&[1.0, 0.0], &[1.0]).is_err());
    }

    #[test]
    fn lorentz_exp_zero_vector_returns_base() {
        let x = lift(&[0.4, -0.1], -1.0, HModel::Lorentz).unwrap();
        let v = TangentVector::zero_at(x.clone());
        let r = lorentz_exp(&x, &v).unwrap();
        assert_eq!(r.coords, x.coords);
    }

    #[test]
    fn lorentz_exp_log_round_trip() {
        let x = lift(&[0.4, -0.1, 0.2], -1.0, HModel::Lorentz).unwrap();
        let y = lift(&[-0.3, 0.5, 0.1], -1.0, HModel::Lorentz).unwrap();
        let v = lorentz_log(&x, &y).unwrap();
        let y2 = lorentz_exp(&x, &v).unwrap();
        assert_close(&y2.coords, &y.coords, 1e-8);

        let v2 = lorentz_log(&x, &y2).unwrap();
        assert_close(&v2.coords, &v.coords, 1e-8);
    }

    #[test]
    fn lorentz_exp_matches_extended_precision_oracle() {
        // K = 1, origin, v = (0, 0.5, 0)
        let o = HPoint::origin(HModel::Lorentz, -1.0, 2).unwrap();
        let v = TangentVector::at_lorentz(o.clone(), vec![0.0, 0.5, 0.0]).unwrap();
        let got = lorentz_exp(&o, &v).unwrap();
        let h = TwoFloat::from(0.5);
        let want = [f64::from(h.cosh()), f64::from(h.sinh()), 0.0];
        assert_close(&got.coords, &want, 1e-12);
    }

    #[test]
    fn lorentz_log_at_same_point_is_zero() {
        let x = lift(&[0.4, -0.1], -1.0, HModel::Lorentz).unwrap();
        let v = lorentz_log(&x, &x).unwrap();
        assert_eq!(v.coords, vec![0.0; 3]);
    }

    #[test]
    fn lorentz_distance_axioms_and_oracle() {
        let x = lift(&[0.4, -0.1], -1.0, HModel::Lorentz).unwrap();
        let y = lift(&[-0.2, 0.3], -1.0, HModel::Lorentz).unwrap();
        assert_eq!(lorentz_distance(&x, &x).unwrap(), 0.0);
        let dxy = lorentz_distance(&x, &y).unwrap();
        let dyx = lorentz_distance(&y, &x).unwrap();
        assert_eq!(dxy, dyx);
        assert!(dxy > 0.0);

        // oracle: -<x,y>_L in TwoFloat, then acosh
        let xs: Vec<TwoFloat> = x.coords.iter().map(|v| TwoFloat::from(*v)).collect();
        let ys: Vec<TwoFloat> = y.coords.iter().map(|v| TwoFloat::from(*v)).collect();
        let inner = -(-xs[0] * ys[0] + xs[1] * ys[1] + xs[2] * ys[2]);
        let want = f64::from(inner.acosh());
        assert!((dxy - want).abs() < 1e-10, "{} vs {}", dxy, want);
    }

    #[test]
    fn transport_from_origin_to_itself_is_identity() {
        let o = HPoint::origin(HModel::Lorentz, -1.0, 3).unwrap();
        let v = TangentVector::at_lorentz(o.clone(), vec![0.0, 0.2, -0.4, 0.1]).unwrap();
        let r = parallel_transport_origin(&o, &v).unwrap();
        assert_close(&r.coords, &v.coords, 1e-15);
    }

    #[test]
    fn transport_preserves_minkowski_norm() {
        let x = lift(&[0.7, -0.2, 0.3], -0.5, HModel::Lorentz).unwrap();
        let o = HPoint::origin(HModel::Lorentz, -0.5, 3).unwrap();
        let v = TangentVector::at_lorentz(o, vec![0.0, 0.3, 0.1, -0.6]).unwrap();
        let before = minkowski_inner(&v.coords, &v.coords).unwrap();
        let pv = parallel_transport_origin(&x, &v).unwrap();
        let after = minkowski_inner(&pv.coords, &pv.coords).unwrap();
        assert!((before - after).abs() < 1e-8);
        // result is tangent at x
        let t = minkowski_inner(&x.coords, &pv.coords).unwrap();
        assert!(t.abs() < 1e-10);
    }

    #[test]
    fn lorentz_add_identity_and_matvec_identity() {
        let x = lift(&[0.4, -0.3], -1.0, HModel::Lorentz).unwrap();
        let o = HPoint::origin(HModel::Lorentz, -1.0, 2).unwrap();
        let r = lorentz_add(&x, &o).unwrap();
        assert_close(&r.coords, &x.coords, 1e-10);

        let r = lorentz_matvec(&Mat::identity(2), &x).unwrap();
        assert_close(&r.coords, &x.coords, 1e-10);
    }

    #[test]
    fn lorentz_add_matches_composition_oracle() {
        // small concrete case: compose log_o, transport, exp_x by hand
        let x = lift(&[0.2, 0.1], -1.0, HModel::Lorentz).unwrap();
        let y = lift(&[-0.1, 0.3], -1.0, HModel::Lorentz).unwrap();
        let got = lorentz_add(&x, &y).unwrap();
        // log_o(y) has spatial part drop(y); transport and exp composed:
        let o = HPoint::origin(HModel::Lorentz, -1.0, 2).unwrap();
        let v = lorentz_log(&o, &y).unwrap();
        let pv = parallel_transport_origin(&x, &v).unwrap();
        let want = lorentz_exp(&x, &pv).unwrap();
        assert_eq!(got.coords, want.coords);
        // and the result is on the hyperboloid
        let inner = minkowski_inner(&got.coords, &got.coords).unwrap();
        assert!((inner + 1.0).abs() < EPS_LORENTZ);
    }

    #[test]
    fn lift_drop_round_trip_both_models() {
        for model in [HModel::PoincareBall, HModel::Lorentz] {
            for c in [-1.0, -0.5, -4.0] {
                let v = [0.3, -0.2, 0.1];
                let x = lift(&v, c, model).unwrap();
                let back = drop(&x);
                assert_close(&back, &v, 1e-8);

                let o = lift(&[0.0, 0.0, 0.0], c, model).unwrap();
                assert!(o.is_origin());
                assert_eq!(drop(&o), vec![0.0; 3]);
            }
        }
    }

    #[test]
    fn lift_matches_extended_precision_oracle_poincare() {
        let v = [0.3, 0.4];
        let x = lift(&v, -1.0, HModel::PoincareBall).unwrap();
        let n = TwoFloat::from(0.5); // |v| = 0.5 exactly
        let scale = n.tanh() / n;
        let want = [f64::from(TwoFloat::from(0.3) * scale), f64::from(TwoFloat::from(0.4) * scale)];
        assert_close(&x.coords, &want, 1e-12);
    }

    #[test]
    fn drop_of_near_boundary_point_is_finite() {
        let x = p(-1.0, &[0.999999999, 0.0]);
        let d = drop(&x);
        assert!(d.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn transition_identity_and_composition() {
        for model in [HModel::PoincareBall, HModel::Lorentz] {
            let x = lift(&[0.4, -0.2], -1.0, model).unwrap();
            let same = transition(&x, -1.0).unwrap();
            assert_close(&same.coords, &x.coords, 1e-8);

            let a = transition(&transition(&x, -2.0).unwrap(), -3.0).unwrap();
            let b = transition(&x, -3.0).unwrap();
            assert_close(&a.coords, &b.coords, 1e-8);
        }
    }

    #[test]
    fn transition_matches_extended_precision_oracle() {
        // Poincaré point at c=-1 to c=-4: drop, then lift with sqrt(4)=2
        let x = p(-1.0, &[0.3, 0.1]);
        let got = transition(&x, -4.0).unwrap();
        let n = (TwoFloat::from(0.3) * TwoFloat::from(0.3)
            + TwoFloat::from(0.1) * TwoFloat::from(0.1))
        .sqrt();
        let tangent_scale = n.atanh() / n;
        let tn = n * tangent_scale;
        let two = TwoFloat::from(2.0);
        let lift_scale = (two * tn).tanh() / (two * tn);
        let s = tangent_scale * lift_scale;
        let want = [f64::from(TwoFloat::from(0.3) * s), f64::from(TwoFloat::from(0.1) * s)];
        assert_close(&got.coords, &want, 1e-12);
    }

    #[test]
    fn transition_rejects_nonnegative_curvature() {
        let x = p(-1.0, &[0.1, 0.1]);
        assert!(matches!(transition(&x, 0.0), Err(GeometryError::NonNegativeCurvature(_))));
    }

    #[test]
    fn mobius_add_approaches_euclidean_addition_as_c_vanishes() {
        let c = -1e-6;
        let x = p(c, &[0.05, -0.08]);
        let y = p(c, &[0.03, 0.06]);
        let r = mobius_add(&x, &y).unwrap();
        assert_close(&r.coords, &[0.08, -0.02], 1e-4);
    }

    #[test]
    fn poincare_constructor_projects_outside_points() {
        let x = p(-1.0, &[2.0, 0.0]);
        assert!(sq_norm(&x.coords) < 1.0);
        assert!((sq_norm(&x.coords).sqrt() - (1.0 - EPS_BALL)).abs() < 1e-12);
    }

    #[test]
    fn lorentz_constructor_rejects_off_hyperboloid_points() {
        assert!(matches!(
            HPoint::lorentz(-1.0, vec![1.0, 1.0]),
            Err(GeometryError::NotOnHyperboloid(_))
        ));
        assert!(HPoint::lorentz(-1.0, vec![1.0, 0.0]).is_ok());
    }

    #[test]
    fn non_finite_inputs_are_rejected() {
        assert_eq!(HPoint::poincare(-1.0, vec![f64::NAN, 0.0]), Err(GeometryError::NonFinite));
        assert!(lift(&[f64::INFINITY], -1.0, HModel::PoincareBall).is_err());
    }
}
