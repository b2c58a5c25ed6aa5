//! Hyperbolic geometry kernel.
//!
//! Two models of hyperbolic space are supported, plus a flat control:
//!
//! * the Poincaré ball `{x ∈ R^d : K‖x‖² < 1}` (curvature `-K`), and
//! * the hyperboloid `{x ∈ R^{d+1} : ⟨x,x⟩_M = -K, x₀ > 0}`.
//!
//! Hyperboloid tangent vectors use ambient coordinates (length `d+1`). At
//! the origin `o = (√K, 0, …, 0)` a tangent vector has `v₀ = 0`.
//!
//! Every function here is pure and works on plain slices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Margin kept between projected Poincaré points and the ball boundary.
pub const BALL_EPS: f64 = 1e-5;
/// Tolerance on the hyperboloid constraint and on tangency, relative to the
/// magnitude of the time coordinate.
pub const HYPERBOLOID_TOL: f64 = 1e-9;
const ARTANH_MAX: f64 = 1.0 - 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldKind {
    PoincareBall,
    Hyperboloid,
    Euclidean,
}

impl ManifoldKind {
    pub fn name(self) -> &'static str {
        match self {
            ManifoldKind::PoincareBall => "poincare",
            ManifoldKind::Hyperboloid => "hyperboloid",
            ManifoldKind::Euclidean => "euclidean",
        }
    }
}

impl std::str::FromStr for ManifoldKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "poincare" | "poincare_ball" | "poincareball" => Ok(ManifoldKind::PoincareBall),
            "hyperboloid" | "lorentz" => Ok(ManifoldKind::Hyperboloid),
            "euclidean" | "flat" => Ok(ManifoldKind::Euclidean),
            other => Err(Error::invalid(format!("unknown manifold `{other}`"))),
        }
    }
}

/// Which model of space to use, and its curvature magnitude `K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifoldSpec {
    pub kind: ManifoldKind,
    pub curvature: f64,
}

impl ManifoldSpec {
    pub fn new(kind: ManifoldKind, curvature: f64) -> Result<Self> {
        let spec = ManifoldSpec { kind, curvature };
        spec.validate()?;
        Ok(spec)
    }

    pub fn poincare(k: f64) -> Self {
        ManifoldSpec { kind: ManifoldKind::PoincareBall, curvature: k }
    }

    pub fn hyperboloid(k: f64) -> Self {
        ManifoldSpec { kind: ManifoldKind::Hyperboloid, curvature: k }
    }

    pub fn euclidean() -> Self {
        ManifoldSpec { kind: ManifoldKind::Euclidean, curvature: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind != ManifoldKind::Euclidean && !(self.curvature.is_finite() && self.curvature > 0.0) {
            return Err(Error::invalid(format!(
                "curvature must be positive and finite, got {}",
                self.curvature
            )));
        }
        Ok(())
    }

    pub fn is_flat(&self) -> bool {
        self.kind == ManifoldKind::Euclidean
    }

    /// Number of stored coordinates for a point of intrinsic dimension `dim`.
    pub fn ambient_dim(&self, dim: usize) -> usize {
        match self.kind {
            ManifoldKind::Hyperboloid => dim + 1,
            _ => dim,
        }
    }

    /// Origin of the model for intrinsic dimension `dim`.
    pub fn origin(&self, dim: usize) -> Vec<f64> {
        let mut o = vec![0.0; self.ambient_dim(dim)];
        if self.kind == ManifoldKind::Hyperboloid {
            o[0] = self.curvature.sqrt();
        }
        o
    }

    /// Checks that `x` is a valid point of this manifold.
    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        check_finite(x)?;
        match self.kind {
            ManifoldKind::Euclidean => Ok(()),
            ManifoldKind::PoincareBall => check_ball(x, self.curvature),
            ManifoldKind::Hyperboloid => check_hyperboloid(x, self.curvature),
        }
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        match self.kind {
            ManifoldKind::Euclidean => {
                same_len(a, b)?;
                Ok(norm(&sub(b, a)))
            }
            ManifoldKind::PoincareBall => poincare_distance(a, b, self.curvature),
            ManifoldKind::Hyperboloid => hyperboloid_distance(a, b, self.curvature),
        }
    }

    /// Exponential map at the origin.
    pub fn exp_map_origin(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_finite(v)?;
        let k = self.curvature;
        match self.kind {
            ManifoldKind::Euclidean => Ok(v.to_vec()),
            ManifoldKind::PoincareBall => Ok(ball_exp0(v, k)),
            ManifoldKind::Hyperboloid => {
                if v.len() < 2 {
                    return Err(Error::invalid("hyperboloid vectors need at least 2 coordinates"));
                }
                if v[0].abs() > HYPERBOLOID_TOL {
                    return Err(Error::invalid("tangent vector at the origin must have v0 = 0"));
                }
                Ok(hyperboloid_exp0(&v[1..], k))
            }
        }
    }

    /// Logarithmic map at the origin; the inverse of [`Self::exp_map_origin`].
    pub fn log_map_origin(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let k = self.curvature;
        match self.kind {
            ManifoldKind::Euclidean => Ok(x.to_vec()),
            ManifoldKind::PoincareBall => Ok(ball_log0(x, k)),
            ManifoldKind::Hyperboloid => {
                let mut out = Vec::with_capacity(x.len());
                out.push(0.0);
                out.extend(hyperboloid_log0(&x[1..], k));
                Ok(out)
            }
        }
    }

    /// Exponential map at an arbitrary base point `x`.
    pub fn exp_map_at(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        check_finite(v)?;
        same_len(x, v)?;
        let k = self.curvature;
        match self.kind {
            ManifoldKind::Euclidean => Ok(add(x, v)),
            ManifoldKind::PoincareBall => {
                let vn = norm(v);
                if vn == 0.0 {
                    return Ok(x.to_vec());
                }
                let sk = k.sqrt();
                let lambda = conformal_factor(x, k);
                let t = (sk * lambda * vn / 2.0).tanh();
                let step = scale(v, t / (sk * vn));
                let step = project_ball(&step, k);
                mobius_add_unchecked(x, &step, k)
                    .map(|p| project_ball(&p, k))
            }
            ManifoldKind::Hyperboloid => {
                check_tangent(x, v)?;
                let vn = minkowski_inner_unchecked(v, v).max(0.0).sqrt();
                if vn == 0.0 {
                    return Ok(x.to_vec());
                }
                let sk = k.sqrt();
                let t = vn / sk;
                let out: Vec<f64> = x
                    .iter()
                    .zip(v)
                    .map(|(xi, vi)| t.cosh() * xi + sk * t.sinh() * vi / vn)
                    .collect();
                Ok(project_hyperboloid(&out, k))
            }
        }
    }

    /// Logarithmic map at base point `x`, returning a tangent vector at `x`.
    pub fn log_map_at(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        self.check_point(y)?;
        same_len(x, y)?;
        let k = self.curvature;
        match self.kind {
            ManifoldKind::Euclidean => Ok(sub(y, x)),
            ManifoldKind::PoincareBall => {
                let u = mobius_add_unchecked(&neg(x), y, k)?;
                let un = norm(&u);
                if un == 0.0 {
                    return Ok(vec![0.0; x.len()]);
                }
                let sk = k.sqrt();
                let lambda = conformal_factor(x, k);
                let r = (sk * un).min(ARTANH_MAX).atanh();
                Ok(scale(&u, 2.0 * r / (sk * lambda * un)))
            }
            ManifoldKind::Hyperboloid => {
                let xy = minkowski_inner_unchecked(x, y);
                let u: Vec<f64> = y.iter().zip(x).map(|(yi, xi)| yi + xy / k * xi).collect();
                let un = minkowski_inner_unchecked(&u, &u).max(0.0).sqrt();
                if un == 0.0 {
                    return Ok(vec![0.0; x.len()]);
                }
                let d = k.sqrt() * (-xy / k).max(1.0).acosh();
                Ok(scale(&u, d / un))
            }
        }
    }

    /// Nearest valid point: ball points are pulled inside the `1 - BALL_EPS`
    /// margin, hyperboloid points get their time coordinate recomputed.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        match self.kind {
            ManifoldKind::Euclidean => x.to_vec(),
            ManifoldKind::PoincareBall => project_ball(x, self.curvature),
            ManifoldKind::Hyperboloid => project_hyperboloid(x, self.curvature),
        }
    }

    /// Norm of a tangent vector: Euclidean on the ball and in flat space,
    /// Minkowski on the hyperboloid.
    pub fn tangent_norm(&self, v: &[f64]) -> f64 {
        match self.kind {
            ManifoldKind::Hyperboloid => minkowski_inner_unchecked(v, v).max(0.0).sqrt(),
            _ => norm(v),
        }
    }
}

/// `-x₀y₀ + Σ_{i≥1} xᵢyᵢ`.
pub fn minkowski_inner(x: &[f64], y: &[f64]) -> Result<f64> {
    same_len(x, y)?;
    if x.len() < 2 {
        return Err(Error::invalid("Minkowski vectors need at least 2 coordinates"));
    }
    Ok(minkowski_inner_unchecked(x, y))
}

fn minkowski_inner_unchecked(x: &[f64], y: &[f64]) -> f64 {
    -x[0] * y[0] + dot(&x[1..], &y[1..])
}

/// Distance on the Poincaré ball of curvature `-k`.
pub fn poincare_distance(a: &[f64], b: &[f64], k: f64) -> Result<f64> {
    same_len(a, b)?;
    check_finite(a)?;
    check_finite(b)?;
    check_ball(a, k)?;
    check_ball(b, k)?;
    let diff2 = dot(&sub(a, b), &sub(a, b));
    let denom = (1.0 - k * dot(a, a)) * (1.0 - k * dot(b, b));
    Ok(acosh_1p(2.0 * k * diff2 / denom) / k.sqrt())
}

/// Distance on the hyperboloid `⟨x,x⟩_M = -k`.
pub fn hyperboloid_distance(a: &[f64], b: &[f64], k: f64) -> Result<f64> {
    same_len(a, b)?;
    check_finite(a)?;
    check_finite(b)?;
    check_hyperboloid(a, k)?;
    check_hyperboloid(b, k)?;
    // -<a,b>/k = 1 + <a-b,a-b>/(2k) on the sheet; the difference form keeps
    // nearby points accurate
    let d = sub(a, b);
    Ok(k.sqrt() * acosh_1p(minkowski_inner_unchecked(&d, &d) / (2.0 * k)))
}

/// Möbius (gyrovector) addition on the ball of curvature `-k`.
pub fn mobius_add(x: &[f64], y: &[f64], k: f64) -> Result<Vec<f64>> {
    same_len(x, y)?;
    check_finite(x)?;
    check_finite(y)?;
    check_ball(x, k)?;
    check_ball(y, k)?;
    mobius_add_unchecked(x, y, k)
}

fn mobius_add_unchecked(x: &[f64], y: &[f64], k: f64) -> Result<Vec<f64>> {
    let xy = dot(x, y);
    let x2 = dot(x, x);
    let y2 = dot(y, y);
    let cx = 1.0 + 2.0 * k * xy + k * y2;
    let cy = 1.0 - k * x2;
    let denom = 1.0 + 2.0 * k * xy + k * k * x2 * y2;
    if denom <= 0.0 {
        return Err(Error::domain("Möbius addition denominator vanished"));
    }
    Ok(x.iter().zip(y).map(|(xi, yi)| (cx * xi + cy * yi) / denom).collect())
}

/// Maps a point between the two hyperbolic models sharing the same `K`.
///
/// Hyperboloid to ball is the stereographic projection from `(-√K, 0, …)`,
/// rescaled so that the image lies in `{K‖p‖² < 1}`. For `K = 1` the map is
/// an isometry; in general `d_H = K · d_P` because the hyperboloid
/// `⟨x,x⟩ = -K` has curvature `-1/K`.
pub fn convert(x: &[f64], from: ManifoldSpec, to: ManifoldSpec) -> Result<Vec<f64>> {
    from.validate()?;
    to.validate()?;
    if from.curvature != to.curvature {
        return Err(Error::invalid(format!(
            "curvature mismatch: {} vs {}",
            from.curvature, to.curvature
        )));
    }
    from.check_point(x)?;
    let k = from.curvature;
    let sk = k.sqrt();
    match (from.kind, to.kind) {
        (a, b) if a == b => Ok(x.to_vec()),
        (ManifoldKind::Hyperboloid, ManifoldKind::PoincareBall) => {
            let denom = sk * (sk + x[0]);
            Ok(x[1..].iter().map(|xi| xi / denom).collect())
        }
        (ManifoldKind::PoincareBall, ManifoldKind::Hyperboloid) => {
            let q2 = k * dot(x, x);
            let denom = 1.0 - q2;
            let mut out = Vec::with_capacity(x.len() + 1);
            out.push(sk * (1.0 + q2) / denom);
            out.extend(x.iter().map(|xi| sk * 2.0 * sk * xi / denom));
            Ok(out)
        }
        _ => Err(Error::invalid("conversion is only defined between the two hyperbolic models")),
    }
}

/// `exp_o` on the ball.
pub(crate) fn ball_exp0(v: &[f64], k: f64) -> Vec<f64> {
    let n = norm(v);
    if n == 0.0 {
        return vec![0.0; v.len()];
    }
    let sk = k.sqrt();
    scale(v, (sk * n).tanh() / (sk * n))
}

pub(crate) fn ball_log0(x: &[f64], k: f64) -> Vec<f64> {
    let n = norm(x);
    if n == 0.0 {
        return vec![0.0; x.len()];
    }
    let sk = k.sqrt();
    scale(x, (sk * n).min(ARTANH_MAX).atanh() / (sk * n))
}

/// `exp_o` on the hyperboloid, taking the spatial part of the tangent vector.
pub(crate) fn hyperboloid_exp0(vs: &[f64], k: f64) -> Vec<f64> {
    let sk = k.sqrt();
    let n = norm(vs);
    let mut out = Vec::with_capacity(vs.len() + 1);
    out.push(sk * (n / sk).cosh());
    if n == 0.0 {
        out.extend(std::iter::repeat(0.0).take(vs.len()));
    } else {
        let f = sk * (n / sk).sinh() / n;
        out.extend(vs.iter().map(|v| f * v));
    }
    out
}

/// Spatial part of `log_o` on the hyperboloid, from the spatial coordinates.
pub(crate) fn hyperboloid_log0(xs: &[f64], k: f64) -> Vec<f64> {
    let sk = k.sqrt();
    let n = norm(xs);
    if n == 0.0 {
        return vec![0.0; xs.len()];
    }
    let d = sk * (n / sk).asinh();
    scale(xs, d / n)
}

fn project_ball(x: &[f64], k: f64) -> Vec<f64> {
    let max = (1.0 - BALL_EPS) / k.sqrt();
    let n = norm(x);
    if n > max {
        scale(x, max / n)
    } else {
        x.to_vec()
    }
}

fn project_hyperboloid(x: &[f64], k: f64) -> Vec<f64> {
    let mut out = x.to_vec();
    if let Some((first, rest)) = out.split_first_mut() {
        *first = (k + dot(rest, rest)).sqrt();
    }
    out
}

fn conformal_factor(x: &[f64], k: f64) -> f64 {
    2.0 / (1.0 - k * dot(x, x))
}

fn check_ball(x: &[f64], k: f64) -> Result<()> {
    if k * dot(x, x) >= 1.0 {
        return Err(Error::domain("point lies on or outside the Poincaré ball"));
    }
    Ok(())
}

fn check_hyperboloid(x: &[f64], k: f64) -> Result<()> {
    if x.len() < 2 {
        return Err(Error::domain("hyperboloid points need at least 2 coordinates"));
    }
    if x[0] <= 0.0 {
        return Err(Error::domain("hyperboloid point is not on the upper sheet"));
    }
    let gap = minkowski_inner_unchecked(x, x) + k;
    if gap.abs() > HYPERBOLOID_TOL * (x[0] * x[0]).max(k) {
        return Err(Error::domain(format!(
            "point is off the hyperboloid (⟨x,x⟩_M + K = {gap:e})"
        )));
    }
    Ok(())
}

fn check_tangent(x: &[f64], v: &[f64]) -> Result<()> {
    let ip = minkowski_inner_unchecked(x, v);
    let scale = x[0].abs().max(1.0) * norm(v).max(1.0);
    if ip.abs() > HYPERBOLOID_TOL * scale {
        return Err(Error::invalid(format!("vector is not tangent at the base point (⟨x,v⟩_M = {ip:e})")));
    }
    Ok(())
}

fn check_finite(x: &[f64]) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid("non-finite coordinate"))
    }
}

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("dimension mismatch: {} vs {}", a.len(), b.len())));
    }
    Ok(())
}

/// `acosh(1 + d)` for `d ≥ 0`, accurate for small `d`.
fn acosh_1p(d: f64) -> f64 {
    let d = d.max(0.0);
    (d + (d * (2.0 + d)).sqrt()).ln_1p()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn neg(a: &[f64]) -> Vec<f64> {
    a.iter().map(|x| -x).collect()
}

fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}
