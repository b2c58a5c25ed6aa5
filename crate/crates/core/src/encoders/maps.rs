//! Manifold maps recorded on a [`Tape`], row by row.
//!
//! These mirror the pure functions in [`crate::manifold`] but are composed
//! from elementary tape operations so gradients flow through them. Points
//! are stored in ambient coordinates (`d+1` columns on the hyperboloid);
//! origin tangent vectors are stored by their `d` spatial coordinates.

use crate::diffcore::{Tape, Tensor, Unary, Var};
use crate::error::Result;
use crate::manifold::{ManifoldKind, ManifoldSpec, BALL_EPS};

/// Largest tangent norm (in units of `√K`) fed to the hyperboloid origin
/// exponential. Beyond it `cosh` grows past the precision of the Minkowski
/// products used by the base-point maps.
pub const HYPERBOLOID_MAX_TANGENT: f64 = 15.0;

fn ball_saturation() -> Unary {
    Unary::TanhcSqrt { t_max: (1.0 - BALL_EPS).atanh() }
}

fn sq_norm_rows(tape: &mut Tape, x: Var) -> Result<Var> {
    tape.row_dot(x, x)
}

/// Row-wise `⟨a,b⟩_M`.
pub fn minkowski_rows(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    let full = tape.row_dot(a, b)?;
    let a0 = tape.slice_cols(a, 0, 1)?;
    let b0 = tape.slice_cols(b, 0, 1)?;
    let t = tape.hadamard(a0, b0)?;
    let t2 = tape.scale(t, 2.0)?;
    tape.sub(full, t2)
}

fn spatial(tape: &mut Tape, x: Var) -> Result<Var> {
    let cols = tape.shape(x).1;
    tape.slice_cols(x, 1, cols)
}

fn reciprocal(tape: &mut Tape, x: Var) -> Result<Var> {
    let one = tape.constant(Tensor::scalar(1.0));
    tape.div(one, x)
}

/// Exponential map at the origin: `N×d` tangent rows to manifold rows.
pub fn exp0(tape: &mut Tape, v: Var, spec: &ManifoldSpec) -> Result<Var> {
    let k = spec.curvature;
    match spec.kind {
        ManifoldKind::Euclidean => Ok(v),
        ManifoldKind::PoincareBall => {
            let n2 = sq_norm_rows(tape, v)?;
            let s = tape.scale(n2, k)?;
            let f = tape.unary(ball_saturation(), s)?;
            tape.hadamard(f, v)
        }
        ManifoldKind::Hyperboloid => {
            let v = tape.clamp_norm_rows(v, HYPERBOLOID_MAX_TANGENT * k.sqrt())?;
            let n2 = sq_norm_rows(tape, v)?;
            let s = tape.scale(n2, 1.0 / k)?;
            let c = tape.unary(Unary::CoshSqrt, s)?;
            let x0 = tape.scale(c, k.sqrt())?;
            let f = tape.unary(Unary::SinhcSqrt, s)?;
            let xs = tape.hadamard(f, v)?;
            tape.concat_cols(x0, xs)
        }
    }
}

/// Logarithmic map at the origin: manifold rows to `N×d` tangent rows.
pub fn log0(tape: &mut Tape, x: Var, spec: &ManifoldSpec) -> Result<Var> {
    let k = spec.curvature;
    match spec.kind {
        ManifoldKind::Euclidean => Ok(x),
        ManifoldKind::PoincareBall => {
            let n2 = sq_norm_rows(tape, x)?;
            let s = tape.scale(n2, k)?;
            let f = tape.unary(Unary::ArtanhcSqrt, s)?;
            tape.hadamard(f, x)
        }
        ManifoldKind::Hyperboloid => {
            let xs = spatial(tape, x)?;
            let n2 = sq_norm_rows(tape, xs)?;
            let s = tape.scale(n2, 1.0 / k)?;
            let f = tape.unary(Unary::AsinhcSqrt, s)?;
            tape.hadamard(f, xs)
        }
    }
}

/// Möbius addition of matching rows on the ball of curvature `-k`.
pub fn mobius_add(tape: &mut Tape, x: Var, y: Var, k: f64) -> Result<Var> {
    let xy = tape.row_dot(x, y)?;
    let x2 = sq_norm_rows(tape, x)?;
    let y2 = sq_norm_rows(tape, y)?;
    let two_kxy = tape.scale(xy, 2.0 * k)?;
    let ky2 = tape.scale(y2, k)?;
    let cx = tape.add(two_kxy, ky2)?;
    let cx = tape.add_scalar(cx, 1.0)?;
    let kx2 = tape.scale(x2, -k)?;
    let cy = tape.add_scalar(kx2, 1.0)?;
    let x2y2 = tape.hadamard(x2, y2)?;
    let k2x2y2 = tape.scale(x2y2, k * k)?;
    let den = tape.add(two_kxy, k2x2y2)?;
    let den = tape.add_scalar(den, 1.0)?;
    let a = tape.hadamard(cx, x)?;
    let b = tape.hadamard(cy, y)?;
    let num = tape.add(a, b)?;
    tape.div(num, den)
}

/// Exponential map at per-row base points `x` applied to tangent rows `v`.
pub fn exp_at(tape: &mut Tape, x: Var, v: Var, spec: &ManifoldSpec) -> Result<Var> {
    let k = spec.curvature;
    match spec.kind {
        ManifoldKind::Euclidean => tape.add(x, v),
        ManifoldKind::PoincareBall => {
            // λ_x / 2 = 1 / (1 - K‖x‖²)
            let x2 = sq_norm_rows(tape, x)?;
            let kx2 = tape.scale(x2, -k)?;
            let one_minus = tape.add_scalar(kx2, 1.0)?;
            let half_lambda = reciprocal(tape, one_minus)?;
            let v2 = sq_norm_rows(tape, v)?;
            let hl2 = tape.hadamard(half_lambda, half_lambda)?;
            let s = tape.hadamard(hl2, v2)?;
            let s = tape.scale(s, k)?;
            let f = tape.unary(ball_saturation(), s)?;
            let f = tape.hadamard(f, half_lambda)?;
            let step = tape.hadamard(f, v)?;
            let out = mobius_add(tape, x, step, k)?;
            project(tape, out, spec)
        }
        ManifoldKind::Hyperboloid => {
            let vv = minkowski_rows(tape, v, v)?;
            let s = tape.scale(vv, 1.0 / k)?;
            let c = tape.unary(Unary::CoshSqrt, s)?;
            let f = tape.unary(Unary::SinhcSqrt, s)?;
            let a = tape.hadamard(c, x)?;
            let b = tape.hadamard(f, v)?;
            let out = tape.add(a, b)?;
            project(tape, out, spec)
        }
    }
}

/// Logarithmic map at per-row base points `x` of the rows `y`.
pub fn log_at(tape: &mut Tape, x: Var, y: Var, spec: &ManifoldSpec) -> Result<Var> {
    let k = spec.curvature;
    match spec.kind {
        ManifoldKind::Euclidean => tape.sub(y, x),
        ManifoldKind::PoincareBall => {
            let neg_x = tape.scale(x, -1.0)?;
            let u = mobius_add(tape, neg_x, y, k)?;
            let x2 = sq_norm_rows(tape, x)?;
            let kx2 = tape.scale(x2, -k)?;
            let one_minus = tape.add_scalar(kx2, 1.0)?;
            let u2 = sq_norm_rows(tape, u)?;
            let s = tape.scale(u2, k)?;
            let f = tape.unary(Unary::ArtanhcSqrt, s)?;
            let f = tape.hadamard(f, one_minus)?;
            tape.hadamard(f, u)
        }
        ManifoldKind::Hyperboloid => {
            let xy = minkowski_rows(tape, x, y)?;
            let alpha = tape.scale(xy, -1.0 / k)?;
            let ax = tape.hadamard(alpha, x)?;
            let u = tape.sub(y, ax)?;
            let f = tape.unary(Unary::ArcoshRatio, alpha)?;
            tape.hadamard(f, u)
        }
    }
}

/// Pulls ball rows inside the boundary margin; recomputes the hyperboloid
/// time coordinate from the spatial ones.
pub fn project(tape: &mut Tape, x: Var, spec: &ManifoldSpec) -> Result<Var> {
    let k = spec.curvature;
    match spec.kind {
        ManifoldKind::Euclidean => Ok(x),
        ManifoldKind::PoincareBall => tape.clamp_norm_rows(x, (1.0 - BALL_EPS) / k.sqrt()),
        ManifoldKind::Hyperboloid => {
            let xs = spatial(tape, x)?;
            let n2 = sq_norm_rows(tape, xs)?;
            let t = tape.add_scalar(n2, k)?;
            let x0 = tape.unary(Unary::Sqrt, t)?;
            tape.concat_cols(x0, xs)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(t: &Tensor) -> Vec<Vec<f64>> {
        t.row_iter().map(<[f64]>::to_vec).collect()
    }

    fn pad0(v: &[f64]) -> Vec<f64> {
        std::iter::once(0.0).chain(v.iter().copied()).collect()
    }

    #[test]
    fn origin_maps_match_kernel() {
        let v = Tensor::from_rows(&[[0.3, 0.4, -0.1], [0.0, 0.0, 0.0], [1.5, -2.0, 0.7]]).unwrap();
        for spec in [ManifoldSpec::poincare(1.0), ManifoldSpec::poincare(2.0), ManifoldSpec::hyperboloid(0.5)] {
            let mut tape = Tape::new();
            let vv = tape.constant(v.clone());
            let x = exp0(&mut tape, vv, &spec).unwrap();
            let back = log0(&mut tape, x, &spec).unwrap();
            for (i, r) in v.row_iter().enumerate() {
                let expected = match spec.kind {
                    ManifoldKind::Hyperboloid => spec.exp_map_origin(&pad0(r)).unwrap(),
                    _ => spec.exp_map_origin(r).unwrap(),
                };
                for (a, b) in tape.value(x).row(i).iter().zip(&expected) {
                    assert!((a - b).abs() < 1e-12, "{spec:?}");
                }
                for (a, b) in tape.value(back).row(i).iter().zip(r) {
                    assert!((a - b).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn base_point_maps_match_kernel() {
        for spec in [ManifoldSpec::poincare(1.0), ManifoldSpec::hyperboloid(1.0), ManifoldSpec::poincare(0.5)] {
            let t = Tensor::from_rows(&[[0.2, -0.4], [0.9, 0.1]]).unwrap();
            let u = Tensor::from_rows(&[[-0.5, 0.3], [0.9, 0.1]]).unwrap();
            let mut tape = Tape::new();
            let tv = tape.constant(t);
            let uv = tape.constant(u);
            let x = exp0(&mut tape, tv, &spec).unwrap();
            let y = exp0(&mut tape, uv, &spec).unwrap();
            let l = log_at(&mut tape, x, y, &spec).unwrap();
            let back = exp_at(&mut tape, x, l, &spec).unwrap();
            let xs = rows(tape.value(x));
            let ys = rows(tape.value(y));
            for (i, lr) in rows(tape.value(l)).iter().enumerate() {
                let expected = spec.log_map_at(&xs[i], &ys[i]).unwrap();
                for (a, b) in lr.iter().zip(&expected) {
                    assert!((a - b).abs() < 1e-9, "{spec:?}: {lr:?} vs {expected:?}");
                }
                for (a, b) in tape.value(back).row(i).iter().zip(&ys[i]) {
                    assert!((a - b).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn exp0_saturates_inside_ball() {
        let spec = ManifoldSpec::poincare(1.0);
        let mut tape = Tape::new();
        let v = tape.constant(Tensor::from_rows(&[[100.0, 0.0]]).unwrap());
        let x = exp0(&mut tape, v, &spec).unwrap();
        let p = tape.value(x).row(0).to_vec();
        assert!(spec.check_point(&p).is_ok());
        assert!((p[0] - (1.0 - BALL_EPS)).abs() < 1e-15);
    }
}
