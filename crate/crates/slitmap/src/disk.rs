//! Conformal maps of the unit disk onto polygons and the conformal
//! extension of boundary correspondences.
//!
//! The map onto a polygon is the classic side-exponent product: its
//! derivative is `C * prod_k (1 - z/a_k)^{beta_k}` with prevertices `a_k` on
//! the unit circle and `beta_k = alpha_k - 1` the exterior turning
//! exponents. For a triangle any prevertex triple works and the affine
//! constants absorb the rest; from four vertices on, three prevertices are
//! pinned and the remaining angular gaps are solved from the side-length
//! ratios. All boundary and interior values come from compound
//! Gauss-Jacobi/Legendre quadrature of the derivative, with the singular
//! corner factor split off in closed form so that evaluation points may
//! round onto a prevertex without blowing up.
//!
//! On top of the polygon solver sit the extension operators: a circle
//! homeomorphism extends to the disk as a cone over its boundary values, an
//! embedded polygonal circle extends via the solved map of its image, and a
//! homeomorphism supported on a crosscut arc of a polygonal region extends
//! by splitting the region along the arc and extending each half from its
//! own disk chart.

use alloc::vec;
use alloc::vec::Vec;

use core::f64::consts::{PI, TAU};

use num_complex::Complex64;

use crate::geom::{
    point_in_polygon, polygon_signed_area, segment_distance, segment_project, Point2,
};
use crate::homeo::CircleHomeo;
use crate::num::lm::{solve_least_squares, LeastSquaresOptions};
use crate::num::quad::{gauss_jacobi, gauss_legendre};
use crate::num::wrap_angle;

#[inline]
fn cx(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Errors from the polygon solver and the extension operators.
#[derive(Clone, Debug, PartialEq)]
pub enum DiskError {
    /// The parameter iteration or a Newton inversion did not reach its
    /// tolerance.
    NoConvergence,
    /// Vertices, sources or targets violate the required cyclic order.
    OrderMismatch,
    /// An evaluation point lies outside the closed unit disk.
    OutsideDomain,
    /// A point expected on the boundary is too far from it.
    NotOnBoundary,
    /// Boundary samples do not describe an injective (monotone) curve.
    NotInjective,
    /// The vertex list is not a simple polygon with nondegenerate corners.
    NotPolygonal,
    /// An arc is not a proper crosscut of the region, or its image data is
    /// inconsistent with one.
    NotProper,
}

impl core::fmt::Display for DiskError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            DiskError::NoConvergence => write!(f, "iteration failed to converge"),
            DiskError::OrderMismatch => write!(f, "points violate the cyclic order"),
            DiskError::OutsideDomain => write!(f, "point outside the unit disk"),
            DiskError::NotOnBoundary => write!(f, "point not on the boundary"),
            DiskError::NotInjective => write!(f, "boundary correspondence is not injective"),
            DiskError::NotPolygonal => write!(f, "vertex list is not a simple polygon"),
            DiskError::NotProper => write!(f, "arc is not a proper crosscut"),
        }
    }
}

impl core::error::Error for DiskError {}

/// A Moebius transformation stored as a 2x2 complex matrix acting by
/// `z -> (a z + b) / (c z + d)`.
#[derive(Clone, Copy, Debug)]
struct Mobius {
    a: Complex64,
    b: Complex64,
    c: Complex64,
    d: Complex64,
}

impl Mobius {
    fn identity() -> Self {
        Mobius {
            a: cx(1.0, 0.0),
            b: cx(0.0, 0.0),
            c: cx(0.0, 0.0),
            d: cx(1.0, 0.0),
        }
    }

    fn apply(&self, z: Complex64) -> Complex64 {
        (self.a * z + self.b) / (self.c * z + self.d)
    }

    fn inverse_apply(&self, z: Complex64) -> Complex64 {
        (self.d * z - self.b) / (-self.c * z + self.a)
    }
}

/// The unique Moebius map sending the triple `z` to the triple `w`.
///
/// Built from the standard matrices that send a triple to `0, 1, infinity`;
/// returns `None` when either triple has a repeated point.
fn mobius_three(z: &[Complex64; 3], w: &[Complex64; 3]) -> Option<Mobius> {
    fn to_standard(q: &[Complex64; 3]) -> Mobius {
        Mobius {
            a: q[1] - q[2],
            b: -q[0] * (q[1] - q[2]),
            c: q[1] - q[0],
            d: -q[2] * (q[1] - q[0]),
        }
    }
    let sz = to_standard(z);
    let sw = to_standard(w);
    // Inverse of `sw` via the adjugate, composed with `sz`.
    let m = Mobius {
        a: sw.d * sz.a - sw.b * sz.c,
        b: sw.d * sz.b - sw.b * sz.d,
        c: -sw.c * sz.a + sw.a * sz.c,
        d: -sw.c * sz.b + sw.a * sz.d,
    };
    let det = m.a * m.d - m.b * m.c;
    if det.norm() < 1e-30 {
        return None;
    }
    Some(m)
}

/// A simple polygon with positively oriented (counterclockwise) vertices.
#[derive(Clone, Debug)]
pub struct Polygon {
    verts: Vec<Point2>,
    alphas: Vec<f64>,
    perimeter: f64,
    diameter: f64,
}

impl Polygon {
    /// Validates the vertex list: at least three corners, counterclockwise
    /// orientation, simple boundary, and interior angles strictly between 0
    /// and 2 pi.
    pub fn new(points: &[Point2]) -> Result<Polygon, DiskError> {
        let m = points.len();
        if m < 3 {
            return Err(DiskError::NotPolygonal);
        }
        let mut diameter = 0.0f64;
        for i in 0..m {
            for j in i + 1..m {
                diameter = diameter.max((points[i] - points[j]).norm());
            }
        }
        if diameter <= 0.0 {
            return Err(DiskError::NotPolygonal);
        }
        let mut perimeter = 0.0f64;
        for k in 0..m {
            let l = (points[(k + 1) % m] - points[k]).norm();
            if l < 1e-12 * diameter {
                return Err(DiskError::NotPolygonal);
            }
            perimeter += l;
        }
        if polygon_signed_area(points) <= 0.0 {
            return Err(DiskError::OrderMismatch);
        }
        // Simplicity: non-adjacent sides must keep a positive distance.
        for i in 0..m {
            let (a, b) = (points[i], points[(i + 1) % m]);
            for j in i + 1..m {
                if j == i || (j + 1) % m == i || (i + 1) % m == j {
                    continue;
                }
                let (c, d) = (points[j], points[(j + 1) % m]);
                if crate::geom::segment_segment_distance(a, b, c, d) < 1e-12 * diameter {
                    return Err(DiskError::NotPolygonal);
                }
            }
        }
        let mut alphas = vec![0.0f64; m];
        for k in 0..m {
            let u = points[k] - points[(k + m - 1) % m];
            let v = points[(k + 1) % m] - points[k];
            let turn = libm::atan2(u.re * v.im - u.im * v.re, u.re * v.re + u.im * v.im);
            let alpha = 1.0 - turn / PI;
            if !(1e-6..=2.0 - 1e-6).contains(&alpha) {
                return Err(DiskError::NotPolygonal);
            }
            alphas[k] = alpha;
        }
        Ok(Polygon {
            verts: points.to_vec(),
            alphas,
            perimeter,
            diameter,
        })
    }

    /// Number of vertices.
    pub fn len(&self) -> usize {
        self.verts.len()
    }

    /// True when the polygon has no vertices (never, by construction).
    pub fn is_empty(&self) -> bool {
        self.verts.is_empty()
    }

    /// Vertex `k`.
    pub fn vertex(&self, k: usize) -> Point2 {
        self.verts[k]
    }

    /// All vertices in order.
    pub fn vertices(&self) -> &[Point2] {
        &self.verts
    }

    /// Interior angle at vertex `k` divided by pi.
    pub fn alpha(&self, k: usize) -> f64 {
        self.alphas[k]
    }

    /// Total boundary length.
    pub fn perimeter(&self) -> f64 {
        self.perimeter
    }

    /// Largest vertex-to-vertex distance.
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// True when `p` lies in the open interior, with points within `tol` of
    /// the boundary counted as not interior.
    pub fn strictly_contains(&self, p: Point2, tol: f64) -> bool {
        point_in_polygon(&self.verts, p) && self.boundary_distance(p) > tol
    }

    /// Distance from `p` to the boundary.
    pub fn boundary_distance(&self, p: Point2) -> f64 {
        let m = self.verts.len();
        let mut d = f64::INFINITY;
        for k in 0..m {
            d = d.min(segment_distance(p, self.verts[k], self.verts[(k + 1) % m]));
        }
        d
    }
}

/// Log-derivative of the side-exponent product at `z`, with corner `skip`'s
/// factor left out so a quadrature rule can restore it in closed form.
fn sc_log_deriv(thetas: &[f64], betas: &[f64], z: Complex64, skip: usize) -> Complex64 {
    let mut acc = cx(0.0, 0.0);
    for (k, (&th, &bk)) in thetas.iter().zip(betas).enumerate() {
        if k == skip {
            continue;
        }
        acc += (cx(1.0, 0.0) - z * Complex64::from_polar(1.0, -th)).ln() * bk;
    }
    if acc.re > 60.0 {
        acc.re = 60.0;
    }
    acc
}

/// Integral of the derivative along the unit circle from prevertex `corner`
/// over an angular length `len` in direction `sgn` (`+1` counterclockwise,
/// `-1` clockwise), as a signed line integral.
///
/// A single Gauss-Jacobi panel suffices because callers keep `len` at most
/// half the angular gap to the next prevertex, which keeps every other
/// singularity at least a panel length away. The corner's own factor is
/// applied exactly: with `z = a e^{i s d}`, the factor `1 - z/a` equals
/// `2 sin(d/2) e^{-i s (pi - d)/2}`, which stays finite when `d` falls
/// below the angular resolution of the corner.
fn corner_arc_panel(
    thetas: &[f64],
    betas: &[f64],
    corner: usize,
    len: f64,
    sgn: f64,
    rule: (&[f64], &[f64]),
) -> Complex64 {
    if len <= 0.0 {
        return cx(0.0, 0.0);
    }
    let a = thetas[corner];
    let bk = betas[corner];
    let mut acc = cx(0.0, 0.0);
    for (&x, &w) in rule.0.iter().zip(rule.1) {
        let d = 0.5 * len * (x + 1.0);
        let z = Complex64::from_polar(1.0, a + sgn * d);
        let half = 0.5 * d;
        let ratio = if half > 0.0 {
            2.0 * libm::sin(half) / d
        } else {
            1.0
        };
        let mut lh = sc_log_deriv(thetas, betas, z, corner);
        lh += cx(bk * libm::log(ratio), -sgn * bk * (0.5 * PI - half));
        acc += lh.exp() * cx(0.0, 1.0) * z * w;
    }
    acc * libm::pow(0.5 * len, 1.0 + bk) * sgn
}

/// Angular gap from prevertex `k` to the next one counterclockwise.
fn gap_after(thetas: &[f64], k: usize) -> f64 {
    let m = thetas.len();
    let g = wrap_angle(thetas[(k + 1) % m] - thetas[k]);
    if g == 0.0 {
        TAU
    } else {
        g
    }
}

/// Full complex side integral from prevertex `k` to prevertex `k+1`, split
/// at the angular midpoint and anchored at each corner.
fn side_integral(
    thetas: &[f64],
    betas: &[f64],
    k: usize,
    rule_k: (&[f64], &[f64]),
    rule_k1: (&[f64], &[f64]),
) -> Complex64 {
    let m = thetas.len();
    let half = 0.5 * gap_after(thetas, k);
    corner_arc_panel(thetas, betas, k, half, 1.0, rule_k)
        - corner_arc_panel(thetas, betas, (k + 1) % m, half, -1.0, rule_k1)
}

/// Integral of the derivative along the radius from the origin to prevertex
/// `k`, with a terminal Gauss-Jacobi panel absorbing the corner factor.
fn ray_to_corner(
    thetas: &[f64],
    betas: &[f64],
    k: usize,
    rule_k: (&[f64], &[f64]),
    gl: (&[f64], &[f64]),
) -> Complex64 {
    let ak = Complex64::from_polar(1.0, thetas[k]);
    let mut d_ray = f64::INFINITY;
    for (j, &th) in thetas.iter().enumerate() {
        if j != k {
            let aj = Complex64::from_polar(1.0, th);
            d_ray = d_ray.min(segment_distance(aj, cx(0.0, 0.0), ak));
        }
    }
    let g = (0.5 * d_ray).min(0.3);
    let mut acc = cx(0.0, 0.0);
    let mut pos = 0.0f64;
    while pos < 1.0 - g - 1e-15 {
        let rest = (1.0 - g) - pos;
        let dmin = d_ray.min(1.0 - pos).max(1e-9);
        let panel = rest.min(0.9 * dmin);
        let mut part = cx(0.0, 0.0);
        for (&x, &w) in gl.0.iter().zip(gl.1) {
            let t = pos + 0.5 * panel * (x + 1.0);
            part += sc_log_deriv(thetas, betas, ak * t, usize::MAX).exp() * w;
        }
        acc += part * (0.5 * panel);
        pos += panel;
    }
    let bk = betas[k];
    let mut tip = cx(0.0, 0.0);
    for (&x, &w) in rule_k.0.iter().zip(rule_k.1) {
        let u = 0.5 * g * (x + 1.0);
        let t = 1.0 - u;
        // The stripped factor (1 - t) equals u exactly, so only the smooth
        // part is evaluated here; the u^beta weight lives in the rule.
        tip += sc_log_deriv(thetas, betas, ak * t, k).exp() * w;
    }
    acc += tip * libm::pow(0.5 * g, 1.0 + bk);
    acc * ak
}

/// Integral of the derivative along the radius from the origin to `zeta`
/// strictly inside the closed disk, away from all prevertices.
fn ray_integral(thetas: &[f64], betas: &[f64], zeta: Complex64, gl: (&[f64], &[f64])) -> Complex64 {
    let r = zeta.norm();
    if r < 1e-300 {
        return cx(0.0, 0.0);
    }
    let dir = zeta / r;
    let mut d_ray = f64::INFINITY;
    for &th in thetas {
        let aj = Complex64::from_polar(1.0, th);
        d_ray = d_ray.min(segment_distance(aj, cx(0.0, 0.0), zeta));
    }
    let d_ray = d_ray.max(1e-12);
    let mut acc = cx(0.0, 0.0);
    let mut pos = 0.0f64;
    let mut guard = 0usize;
    while pos < r - 1e-15 {
        let rest = r - pos;
        let dmin = d_ray.max(1.0 - pos).max(1e-9);
        let panel = rest.min(0.9 * dmin);
        let mut part = cx(0.0, 0.0);
        for (&x, &w) in gl.0.iter().zip(gl.1) {
            let t = pos + 0.5 * panel * (x + 1.0);
            part += sc_log_deriv(thetas, betas, dir * t, usize::MAX).exp() * w;
        }
        acc += part * (0.5 * panel);
        pos += panel;
        guard += 1;
        if guard > 400 {
            break;
        }
    }
    acc * dir
}

/// Conformal map of the open unit disk onto a simple polygon.
///
/// `eval` maps disk to polygon; `invert`, `boundary_point` and
/// `boundary_invert` give the inverse and the boundary correspondence. The
/// normalization is a disk Moebius factor fixed by [`DiskPolygonMap::normalize_three`];
/// a freshly solved map has the identity normalization and its prevertex
/// gaps solve the side-length conditions directly.
#[derive(Clone, Debug)]
pub struct DiskPolygonMap {
    polygon: Polygon,
    base_prevertices: Vec<f64>,
    betas: Vec<f64>,
    constant: Complex64,
    translation: Complex64,
    mobius: Mobius,
    jac_rules: Vec<(Vec<f64>, Vec<f64>)>,
    gl: (Vec<f64>, Vec<f64>),
    seeds: Vec<(Complex64, Complex64)>,
    /// Final parameter-problem residual (side-ratio mismatch, sup norm).
    pub residual_inf: f64,
    /// Independent check: sup distance between quadrature-chained vertex
    /// images and the requested vertices, including the closing side.
    pub vertex_residual: f64,
}

/// Solves the side-exponent parameter problem for `polygon`.
///
/// Three prevertices are pinned (removing the Moebius freedom) and the
/// remaining gaps are parametrized by log-ratios through a softmax per
/// pinned sector, so every iterate keeps the strict cyclic order. The
/// residuals are the normalized side-length mismatches.
pub fn solve_disk_polygon(polygon: &Polygon, tol: f64) -> Result<DiskPolygonMap, DiskError> {
    let m = polygon.len();
    let betas: Vec<f64> = (0..m).map(|k| polygon.alpha(k) - 1.0).collect();
    let side_lens: Vec<f64> = (0..m)
        .map(|k| (polygon.vertex((k + 1) % m) - polygon.vertex(k)).norm())
        .collect();
    let total_len: f64 = side_lens.iter().sum();

    // Arclength-proportional starting angles, anchored at zero.
    let mut init = vec![0.0f64; m];
    let mut cum = 0.0;
    for k in 1..m {
        cum += side_lens[k - 1];
        init[k] = TAU * cum / total_len;
    }

    let jac24: Vec<(Vec<f64>, Vec<f64>)> = betas.iter().map(|&b| gauss_jacobi(24, b)).collect();

    let mut residual_inf = 0.0f64;
    let thetas: Vec<f64> = if m == 3 {
        // A triangle needs no parameter problem: the exponents fix the
        // angles and the affine constants absorb scale and rotation.
        init
    } else {
        let pins = [0usize, m / 3, (2 * m) / 3];
        let pin_angles = [init[pins[0]], init[pins[1]], init[pins[2]]];
        let counts = [pins[1] - pins[0], pins[2] - pins[1], m - pins[2]];

        let build = |x: &[f64]| -> Vec<f64> {
            let mut thetas = vec![0.0f64; m];
            let mut xi = 0usize;
            for s in 0..3 {
                let start = pin_angles[s];
                let end = if s == 2 {
                    pin_angles[0] + TAU
                } else {
                    pin_angles[s + 1]
                };
                let sector = end - start;
                let c = counts[s];
                let mut ws = vec![0.0f64; c];
                ws[0] = 1.0;
                let mut sum = 1.0;
                for w in ws.iter_mut().skip(1) {
                    *w = libm::exp(x[xi].clamp(-40.0, 40.0));
                    sum += *w;
                    xi += 1;
                }
                let base = pins[s];
                let mut t = start;
                thetas[base] = wrap_angle(t);
                for l in 1..c {
                    t += sector * ws[l - 1] / sum;
                    thetas[base + l] = wrap_angle(t);
                }
            }
            thetas
        };

        // Start from the arclength gaps expressed as log-ratios.
        let mut x0 = Vec::with_capacity(m - 3);
        for s in 0..3 {
            let base = pins[s];
            let g0 = init[base + 1] - init[base];
            for l in 1..counts[s] {
                let hi = if base + l + 1 == m {
                    TAU
                } else {
                    init[base + l + 1]
                };
                x0.push(libm::log((hi - init[base + l]).max(1e-12) / g0.max(1e-12)));
            }
        }

        let opts = LeastSquaresOptions {
            max_iterations: 160,
            residual_target: (0.1 * tol).max(1e-13),
            central_switch: 1e-7,
            ..LeastSquaresOptions::default()
        };
        let result = solve_least_squares(m, &x0, &opts, |x, out| {
            let th = build(x);
            let mut sides = vec![0.0f64; m];
            let mut sum = 0.0;
            for k in 0..m {
                let l = side_integral(
                    &th,
                    &betas,
                    k,
                    (&jac24[k].0, &jac24[k].1),
                    (&jac24[(k + 1) % m].0, &jac24[(k + 1) % m].1),
                )
                .norm();
                sides[k] = l;
                sum += l;
            }
            for k in 0..m {
                out[k] = sides[k] / sum - side_lens[k] / total_len;
            }
        });
        residual_inf = result.residual_inf;
        if !result.residual_inf.is_finite() || result.residual_inf > tol.max(1e-8) {
            return Err(DiskError::NoConvergence);
        }
        build(&result.x)
    };

    // Final high-order rules and the affine constants.
    let jac48: Vec<(Vec<f64>, Vec<f64>)> = betas.iter().map(|&b| gauss_jacobi(48, b)).collect();
    let gl = gauss_legendre(24);
    let sides: Vec<Complex64> = (0..m)
        .map(|k| {
            side_integral(
                &thetas,
                &betas,
                k,
                (&jac48[k].0, &jac48[k].1),
                (&jac48[(k + 1) % m].0, &jac48[(k + 1) % m].1),
            )
        })
        .collect();
    let span = polygon.vertex(1) - polygon.vertex(0);
    if sides[0].norm() < 1e-300 {
        return Err(DiskError::NoConvergence);
    }
    let constant = span / sides[0];
    let f0 = ray_to_corner(&thetas, &betas, 0, (&jac48[0].0, &jac48[0].1), (&gl.0, &gl.1));
    let translation = polygon.vertex(0) - constant * f0;

    let mut vertex_residual = 0.0f64;
    let mut w = polygon.vertex(0);
    for k in 0..m {
        w += constant * sides[k];
        let target = polygon.vertex((k + 1) % m);
        vertex_residual = vertex_residual.max((w - target).norm());
    }

    let mut map = DiskPolygonMap {
        polygon: polygon.clone(),
        base_prevertices: thetas,
        betas,
        constant,
        translation,
        mobius: Mobius::identity(),
        jac_rules: jac48,
        gl,
        seeds: Vec::new(),
        residual_inf,
        vertex_residual,
    };
    map.seeds = map.build_seeds();
    Ok(map)
}

impl DiskPolygonMap {
    /// The image polygon.
    pub fn polygon(&self) -> &Polygon {
        &self.polygon
    }

    /// Scaling constant of the derivative product.
    pub fn constant(&self) -> Complex64 {
        self.constant
    }

    /// Prevertex angles in vertex order, in the map's current
    /// normalization.
    pub fn prevertices(&self) -> Vec<f64> {
        (0..self.polygon.len())
            .map(|k| self.prevertex_angle(k))
            .collect()
    }

    /// Prevertex angle of vertex `k` in the current normalization.
    pub fn prevertex_angle(&self, k: usize) -> f64 {
        let a = Complex64::from_polar(1.0, self.base_prevertices[k]);
        wrap_angle(self.mobius.inverse_apply(a).arg())
    }

    fn build_seeds(&self) -> Vec<(Complex64, Complex64)> {
        let mut seeds = Vec::new();
        for &r in &[0.12, 0.35, 0.6, 0.82, 0.95] {
            for j in 0..24 {
                let zeta = Complex64::from_polar(r, TAU * (j as f64 + 0.37) / 24.0);
                seeds.push((zeta, self.base_eval(zeta)));
            }
        }
        seeds
    }

    fn base_eval(&self, zeta: Complex64) -> Complex64 {
        for (k, &th) in self.base_prevertices.iter().enumerate() {
            if (zeta - Complex64::from_polar(1.0, th)).norm() < 5e-13 {
                return self.polygon.vertex(k);
            }
        }
        self.translation
            + self.constant
                * ray_integral(
                    &self.base_prevertices,
                    &self.betas,
                    zeta,
                    (&self.gl.0, &self.gl.1),
                )
    }

    fn base_deriv(&self, zeta: Complex64) -> Complex64 {
        self.constant * sc_log_deriv(&self.base_prevertices, &self.betas, zeta, usize::MAX).exp()
    }

    /// Value of the map at `z` in the closed unit disk.
    pub fn eval(&self, z: Complex64) -> Result<Complex64, DiskError> {
        let r = z.norm();
        if r > 1.0 + 1e-9 {
            return Err(DiskError::OutsideDomain);
        }
        let z = if r > 1.0 { z / r } else { z };
        let mut zeta = self.mobius.apply(z);
        let rz = zeta.norm();
        if rz > 1.0 {
            zeta /= rz;
        }
        Ok(self.base_eval(zeta))
    }

    /// Derivative of the map at `z` strictly inside the disk.
    pub fn eval_derivative(&self, z: Complex64) -> Result<Complex64, DiskError> {
        if z.norm() > 1.0 + 1e-9 {
            return Err(DiskError::OutsideDomain);
        }
        let zeta = self.mobius.apply(z);
        let den = self.mobius.c * z + self.mobius.d;
        let det = self.mobius.a * self.mobius.d - self.mobius.b * self.mobius.c;
        Ok(self.base_deriv(zeta) * det / (den * den))
    }

    fn locate_side(&self, tau: f64) -> (usize, f64, f64) {
        let m = self.base_prevertices.len();
        let t = wrap_angle(tau);
        let mut k = m - 1;
        for i in 0..m {
            if self.base_prevertices[i] <= t + 1e-15 {
                k = i;
            } else {
                break;
            }
        }
        let da = wrap_angle(t - self.base_prevertices[k]);
        let gap = gap_after(&self.base_prevertices, k);
        (k, da.min(gap), (gap - da).max(0.0))
    }

    fn base_boundary_point(&self, tau: f64) -> Point2 {
        let (k, da, db) = self.locate_side(tau);
        let m = self.polygon.len();
        if da <= db {
            self.polygon.vertex(k)
                + self.constant
                    * corner_arc_panel(
                        &self.base_prevertices,
                        &self.betas,
                        k,
                        da,
                        1.0,
                        (&self.jac_rules[k].0, &self.jac_rules[k].1),
                    )
        } else {
            let k1 = (k + 1) % m;
            self.polygon.vertex(k1)
                + self.constant
                    * corner_arc_panel(
                        &self.base_prevertices,
                        &self.betas,
                        k1,
                        db,
                        -1.0,
                        (&self.jac_rules[k1].0, &self.jac_rules[k1].1),
                    )
        }
    }

    /// Boundary value at angle `t` in the current normalization.
    pub fn boundary_point(&self, t: f64) -> Point2 {
        let tau = self.mobius.apply(Complex64::from_polar(1.0, t)).arg();
        self.base_boundary_point(tau)
    }

    fn base_boundary_invert(&self, w: Point2) -> Result<f64, DiskError> {
        let m = self.polygon.len();
        let scale = 1.0 + self.polygon.diameter();
        let mut best = (f64::INFINITY, 0usize);
        for k in 0..m {
            let d = segment_distance(w, self.polygon.vertex(k), self.polygon.vertex((k + 1) % m));
            if d < best.0 {
                best = (d, k);
            }
        }
        if best.0 > 1e-6 * scale {
            return Err(DiskError::NotOnBoundary);
        }
        let k = best.1;
        let k1 = (k + 1) % m;
        let (_, s) = segment_project(w, self.polygon.vertex(k), self.polygon.vertex(k1));
        let side_len = (self.polygon.vertex(k1) - self.polygon.vertex(k)).norm();
        let d0 = s * side_len;
        let d1 = (1.0 - s) * side_len;
        let gap = gap_after(&self.base_prevertices, k);
        let half_gap = 0.5 * gap;
        let cmag = self.constant.norm();
        // The angular midpoint of the side is not its metric midpoint, so
        // the anchor is chosen by the chord length reached there; that
        // keeps the root inside the half-gap bracket.
        let dmid = cmag
            * corner_arc_panel(
                &self.base_prevertices,
                &self.betas,
                k,
                half_gap,
                1.0,
                (&self.jac_rules[k].0, &self.jac_rules[k].1),
            )
            .norm();
        let (anchor, sgn, target, half_len) = if d0 <= dmid {
            (k, 1.0, d0, dmid)
        } else {
            (k1, -1.0, d1, (side_len - dmid).max(1e-300))
        };
        if target < 1e-13 * scale {
            return Ok(self.base_prevertices[anchor]);
        }
        let beta = self.betas[anchor];
        let rule = (&self.jac_rules[anchor].0[..], &self.jac_rules[anchor].1[..]);
        let dist = |d: f64| -> f64 {
            cmag * corner_arc_panel(&self.base_prevertices, &self.betas, anchor, d, sgn, rule).norm()
        };
        let expo = 1.0 / (1.0 + beta).max(0.05);
        let mut delta =
            (half_gap * libm::pow((target / half_len).clamp(1e-300, 1.0), expo)).clamp(1e-15, half_gap);
        let mut lo = 0.0f64;
        let mut hi = half_gap;
        for _ in 0..80 {
            let f = dist(delta) - target;
            if libm::fabs(f) <= 1e-12 * scale {
                return Ok(wrap_angle(self.base_prevertices[anchor] + sgn * delta));
            }
            if f > 0.0 {
                hi = delta;
            } else {
                lo = delta;
            }
            let z = Complex64::from_polar(1.0, self.base_prevertices[anchor] + sgn * delta);
            let smooth = sc_log_deriv(&self.base_prevertices, &self.betas, z, anchor)
                .re
                .min(60.0);
            let deriv = cmag * libm::exp(smooth) * libm::pow(2.0 * libm::sin(0.5 * delta), beta);
            let mut next = delta - f / deriv.max(1e-300);
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            if hi - lo < 1e-16 {
                return Ok(wrap_angle(self.base_prevertices[anchor] + sgn * delta));
            }
            delta = next;
        }
        Err(DiskError::NoConvergence)
    }

    /// Angle whose boundary value is `w`, in the current normalization.
    pub fn boundary_invert(&self, w: Point2) -> Result<f64, DiskError> {
        let tau = self.base_boundary_invert(w)?;
        let a = Complex64::from_polar(1.0, tau);
        Ok(wrap_angle(self.mobius.inverse_apply(a).arg()))
    }

    /// Preimage of an interior point `w` under the map.
    pub fn invert(&self, w: Point2) -> Result<Complex64, DiskError> {
        let scale = 1.0 + self.polygon.diameter();
        if !point_in_polygon(self.polygon.vertices(), w)
            && self.polygon.boundary_distance(w) > 1e-9 * scale
        {
            return Err(DiskError::OutsideDomain);
        }
        let mut zeta = cx(0.0, 0.0);
        let mut err = f64::INFINITY;
        for &(zs, ws) in &self.seeds {
            let d = (ws - w).norm();
            if d < err {
                err = d;
                zeta = zs;
            }
        }
        let mut wc = self.base_eval(zeta);
        err = (wc - w).norm();
        for _ in 0..80 {
            if err <= 1e-12 * scale {
                break;
            }
            let dv = self.base_deriv(zeta);
            if dv.norm() < 1e-300 {
                return Err(DiskError::NoConvergence);
            }
            let mut step = (w - wc) / dv;
            let smax = step.norm();
            if smax > 0.4 {
                step *= 0.4 / smax;
            }
            let mut accepted = false;
            for _ in 0..30 {
                let mut cand = zeta + step;
                let rc = cand.norm();
                if rc > 1.0 - 1e-14 {
                    cand *= (1.0 - 1e-14) / rc;
                }
                let wc2 = self.base_eval(cand);
                let e2 = (wc2 - w).norm();
                if e2 < err {
                    zeta = cand;
                    wc = wc2;
                    err = e2;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if err > 1e-8 * scale {
            return Err(DiskError::NoConvergence);
        }
        let z = self.mobius.inverse_apply(zeta);
        let rz = z.norm();
        Ok(if rz > 1.0 { z / rz } else { z })
    }

    /// Returns a copy whose normalization sends the three boundary angles
    /// `sources` to the three boundary points `targets`.
    ///
    /// Both triples must be in strict counterclockwise order; the targets
    /// must lie on the polygon boundary.
    pub fn normalize_three(
        &self,
        sources: [f64; 3],
        targets: [Point2; 3],
    ) -> Result<DiskPolygonMap, DiskError> {
        fn ccw_gaps(t: [f64; 3]) -> Result<(), DiskError> {
            let g0 = wrap_angle(t[1] - t[0]);
            let g1 = wrap_angle(t[2] - t[1]);
            let g2 = wrap_angle(t[0] - t[2]);
            if g0 < 1e-10 || g1 < 1e-10 || g2 < 1e-10 {
                return Err(DiskError::OrderMismatch);
            }
            if (g0 + g1 + g2 - TAU).abs() > 1e-9 {
                return Err(DiskError::OrderMismatch);
            }
            Ok(())
        }
        ccw_gaps(sources)?;
        let mut psis = [0.0f64; 3];
        for (p, &t) in psis.iter_mut().zip(&targets) {
            *p = self.base_boundary_invert(t)?;
        }
        ccw_gaps(psis)?;
        let zs = [
            Complex64::from_polar(1.0, sources[0]),
            Complex64::from_polar(1.0, sources[1]),
            Complex64::from_polar(1.0, sources[2]),
        ];
        let ws = [
            Complex64::from_polar(1.0, psis[0]),
            Complex64::from_polar(1.0, psis[1]),
            Complex64::from_polar(1.0, psis[2]),
        ];
        let mobius = mobius_three(&zs, &ws).ok_or(DiskError::OrderMismatch)?;
        if mobius.apply(cx(0.0, 0.0)).norm() > 1.0 - 1e-12 {
            return Err(DiskError::OrderMismatch);
        }
        let mut out = self.clone();
        out.mobius = mobius;
        Ok(out)
    }
}

/// The radial (cone) extension of a circle homeomorphism to the closed unit
/// disk: each circle of radius `rho` is rotated by the boundary map.
#[derive(Clone, Debug)]
pub struct ConeExtension {
    forward: CircleHomeo,
    backward: CircleHomeo,
}

/// Extends the circle homeomorphism `g` radially to the closed disk.
pub fn cone_extend(g: &CircleHomeo) -> ConeExtension {
    ConeExtension {
        forward: g.clone(),
        backward: g.inverse(),
    }
}

impl ConeExtension {
    /// Value at `z` in the closed disk.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        let r = z.norm();
        if r < 1e-300 {
            return cx(0.0, 0.0);
        }
        Complex64::from_polar(r, self.forward.eval(z.arg()))
    }

    /// Value of the inverse extension at `z`.
    pub fn invert(&self, z: Complex64) -> Complex64 {
        let r = z.norm();
        if r < 1e-300 {
            return cx(0.0, 0.0);
        }
        Complex64::from_polar(r, self.backward.eval(z.arg()))
    }

    /// The boundary homeomorphism.
    pub fn homeo(&self) -> &CircleHomeo {
        &self.forward
    }
}

/// An embedding of the circle whose image is a polygon: parameter angles in
/// strictly increasing cyclic order, mapped piecewise linearly to the
/// polygon vertices.
#[derive(Clone, Debug)]
pub struct PolygonalCircleEmbedding {
    params: Vec<f64>,
    points: Vec<Point2>,
    scale: f64,
}

impl PolygonalCircleEmbedding {
    /// Builds the embedding from `(angle, point)` samples.
    ///
    /// Angles are wrapped and sorted; the point sequence must then be a
    /// simple closed polygon (either orientation).
    pub fn new(samples: &[(f64, Point2)]) -> Result<Self, DiskError> {
        if samples.len() < 3 {
            return Err(DiskError::NotPolygonal);
        }
        let mut pairs: Vec<(f64, Point2)> =
            samples.iter().map(|&(t, p)| (wrap_angle(t), p)).collect();
        pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let n = pairs.len();
        for i in 0..n {
            let gap = wrap_angle(pairs[(i + 1) % n].0 - pairs[i].0);
            if gap < 1e-10 {
                return Err(DiskError::NotInjective);
            }
        }
        let points: Vec<Point2> = pairs.iter().map(|&(_, p)| p).collect();
        let params: Vec<f64> = pairs.iter().map(|&(t, _)| t).collect();
        let area = polygon_signed_area(&points);
        let ccw: Vec<Point2> = if area >= 0.0 {
            points.clone()
        } else {
            let mut r = points.clone();
            r.reverse();
            r
        };
        let poly = Polygon::new(&ccw).map_err(|e| match e {
            DiskError::OrderMismatch => DiskError::NotInjective,
            other => other,
        })?;
        let scale = poly.diameter();
        Ok(PolygonalCircleEmbedding {
            params,
            points,
            scale,
        })
    }

    /// Parameter angles in increasing order.
    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Image vertices in parameter order.
    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    /// True when the image polygon is traversed counterclockwise as the
    /// parameter increases.
    pub fn orientation_preserving(&self) -> bool {
        polygon_signed_area(&self.points) > 0.0
    }

    /// The embedding with conjugated image, which reverses orientation.
    pub fn conjugated(&self) -> Self {
        PolygonalCircleEmbedding {
            params: self.params.clone(),
            points: self.points.iter().map(|p| p.conj()).collect(),
            scale: self.scale,
        }
    }

    /// Value at angle `t`.
    pub fn eval(&self, t: f64) -> Point2 {
        let n = self.params.len();
        let t = wrap_angle(t);
        let mut k = n - 1;
        for i in 0..n {
            if self.params[i] <= t + 1e-15 {
                k = i;
            } else {
                break;
            }
        }
        let gap = wrap_angle(self.params[(k + 1) % n] - self.params[k]);
        let gap = if gap == 0.0 { TAU } else { gap };
        let s = (wrap_angle(t - self.params[k]) / gap).clamp(0.0, 1.0);
        self.points[k] + (self.points[(k + 1) % n] - self.points[k]) * s
    }

    /// Angle whose value is the boundary point `w`.
    pub fn invert(&self, w: Point2) -> Result<f64, DiskError> {
        let n = self.params.len();
        let mut best = (f64::INFINITY, 0usize, 0.0f64);
        for k in 0..n {
            let (a, b) = (self.points[k], self.points[(k + 1) % n]);
            let d = segment_distance(w, a, b);
            if d < best.0 {
                let (_, s) = segment_project(w, a, b);
                best = (d, k, s);
            }
        }
        if best.0 > 1e-6 * (1.0 + self.scale) {
            return Err(DiskError::NotOnBoundary);
        }
        let gap = wrap_angle(self.params[(best.1 + 1) % n] - self.params[best.1]);
        let gap = if gap == 0.0 { TAU } else { gap };
        Ok(wrap_angle(self.params[best.1] + best.2.clamp(0.0, 1.0) * gap))
    }
}

/// Boundary correspondence backing a disk extension: either a polygonal
/// circle embedding, or the boundary of a solved chart map followed by a
/// side-by-side affine reassignment of the image sides.
#[derive(Clone, Debug)]
enum BoundaryCurve {
    Polyline(PolygonalCircleEmbedding),
    ChartSides {
        chart: DiskPolygonMap,
        targets: Vec<(Point2, Point2)>,
    },
}

impl BoundaryCurve {
    fn eval(&self, t: f64) -> Point2 {
        match self {
            BoundaryCurve::Polyline(f) => f.eval(t),
            BoundaryCurve::ChartSides { chart, targets } => {
                let (k, da, db) = chart.locate_side(t);
                let w = chart.base_boundary_point(t);
                let vk = chart.polygon.vertex(k);
                let vk1 = chart.polygon.vertex((k + 1) % chart.polygon.len());
                let len = (vk1 - vk).norm();
                let s = if da <= db {
                    ((w - vk).norm() / len).clamp(0.0, 1.0)
                } else {
                    1.0 - ((w - vk1).norm() / len).clamp(0.0, 1.0)
                };
                let (ta, tb) = targets[k];
                ta + (tb - ta) * s
            }
        }
    }

    fn invert(&self, w: Point2) -> Result<f64, DiskError> {
        match self {
            BoundaryCurve::Polyline(f) => f.invert(w),
            BoundaryCurve::ChartSides { chart, targets } => {
                let mut best = (f64::INFINITY, 0usize, 0.0f64);
                for (k, &(ta, tb)) in targets.iter().enumerate() {
                    let d = segment_distance(w, ta, tb);
                    if d < best.0 {
                        let (_, s) = segment_project(w, ta, tb);
                        best = (d, k, s.clamp(0.0, 1.0));
                    }
                }
                if best.0 > 1e-6 * (1.0 + chart.polygon.diameter()) {
                    return Err(DiskError::NotOnBoundary);
                }
                let vk = chart.polygon.vertex(best.1);
                let vk1 = chart.polygon.vertex((best.1 + 1) % chart.polygon.len());
                let p = vk + (vk1 - vk) * best.2;
                chart.base_boundary_invert(p)
            }
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self {
            BoundaryCurve::Polyline(f) => f.params().to_vec(),
            BoundaryCurve::ChartSides { chart, .. } => chart.base_prevertices.clone(),
        }
    }
}

/// Conformal-cone extension of a circle-to-polygon boundary correspondence
/// to the closed unit disk.
///
/// The extension is the solved polygon map composed with the cone over the
/// pulled-back boundary homeomorphism; restricted to the circle it
/// reproduces the correspondence. Orientation-reversing input is handled by
/// conjugating the image, extending, and conjugating back.
#[derive(Clone, Debug)]
pub struct DiskEmbeddingExtension {
    riemann: DiskPolygonMap,
    curve: BoundaryCurve,
    /// Snapshot of the pulled-back boundary homeomorphism on a fine angular
    /// grid; evaluation uses exact pullbacks, the snapshot certifies
    /// injectivity and seeds diagnostics.
    pub gamma: CircleHomeo,
    reflected: bool,
}

fn build_disk_extension(
    image: &Polygon,
    curve: BoundaryCurve,
    tol: f64,
) -> Result<DiskEmbeddingExtension, DiskError> {
    let solved = solve_disk_polygon(image, tol)?;
    let thirds = [0.0, TAU / 3.0, 2.0 * TAU / 3.0];
    let targets = [
        curve.eval(thirds[0]),
        curve.eval(thirds[1]),
        curve.eval(thirds[2]),
    ];
    let riemann = solved.normalize_three(thirds, targets)?;

    let mut nodes: Vec<f64> = curve.breakpoints();
    for j in 0..512 {
        nodes.push(TAU * j as f64 / 512.0);
    }
    nodes.iter_mut().for_each(|t| *t = wrap_angle(*t));
    nodes.sort_unstable_by(|a, b| a.total_cmp(b));
    nodes.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let mut samples = Vec::with_capacity(nodes.len());
    for &t in &nodes {
        let gt = riemann.boundary_invert(curve.eval(t))?;
        samples.push((t, gt));
    }
    let gamma = CircleHomeo::from_samples(&samples).map_err(|_| DiskError::NotInjective)?;
    Ok(DiskEmbeddingExtension {
        riemann,
        curve,
        gamma,
        reflected: false,
    })
}

/// Extends a polygonal circle embedding to a homeomorphic embedding of the
/// closed unit disk onto the closed image polygon.
pub fn extend_circle_embedding(
    f: &PolygonalCircleEmbedding,
    tol: f64,
) -> Result<DiskEmbeddingExtension, DiskError> {
    if f.orientation_preserving() {
        let polygon = Polygon::new(f.points())?;
        build_disk_extension(&polygon, BoundaryCurve::Polyline(f.clone()), tol)
    } else {
        let g = f.conjugated();
        let polygon = Polygon::new(g.points())?;
        let mut ext = build_disk_extension(&polygon, BoundaryCurve::Polyline(g), tol)?;
        ext.reflected = true;
        Ok(ext)
    }
}

impl DiskEmbeddingExtension {
    /// The solved map of the (possibly conjugated) image polygon.
    pub fn riemann(&self) -> &DiskPolygonMap {
        &self.riemann
    }

    /// True when the extended embedding reverses orientation.
    pub fn reflected(&self) -> bool {
        self.reflected
    }

    fn eval_inner(&self, z: Complex64) -> Result<Complex64, DiskError> {
        let r = z.norm();
        if r > 1.0 + 1e-9 {
            return Err(DiskError::OutsideDomain);
        }
        let r = r.min(1.0);
        if r < 1e-14 {
            return self.riemann.eval(cx(0.0, 0.0));
        }
        let t = z.arg();
        let gt = self.riemann.boundary_invert(self.curve.eval(t))?;
        if r >= 1.0 - 1e-12 {
            Ok(self.riemann.boundary_point(gt))
        } else {
            self.riemann.eval(Complex64::from_polar(r, gt))
        }
    }

    /// Value of the extension at `z` in the closed unit disk.
    pub fn eval(&self, z: Complex64) -> Result<Complex64, DiskError> {
        let w = self.eval_inner(z)?;
        Ok(if self.reflected { w.conj() } else { w })
    }

    /// Preimage of `w` under the extension.
    pub fn invert_eval(&self, w: Complex64) -> Result<Complex64, DiskError> {
        let y = if self.reflected { w.conj() } else { w };
        let zeta = self.riemann.invert(y)?;
        let r = zeta.norm();
        if r < 1e-13 {
            return Ok(cx(0.0, 0.0));
        }
        let s = zeta.arg();
        let t = self.curve.invert(self.riemann.boundary_point(s))?;
        Ok(Complex64::from_polar(r, t))
    }
}

/// Position of a point on a polygon boundary: side index, parameter along
/// the side in `[0, 1)`, and cumulative arclength from vertex 0.
#[derive(Clone, Copy, Debug)]
struct BoundaryPosition {
    side: usize,
    s: f64,
    along: f64,
}

fn boundary_position(region: &Polygon, p: Point2) -> Result<BoundaryPosition, DiskError> {
    let m = region.len();
    let scale = 1.0 + region.diameter();
    let mut best = (f64::INFINITY, 0usize, 0.0f64);
    for k in 0..m {
        let (a, b) = (region.vertex(k), region.vertex((k + 1) % m));
        let d = segment_distance(p, a, b);
        if d < best.0 {
            let (_, s) = segment_project(p, a, b);
            best = (d, k, s.clamp(0.0, 1.0));
        }
    }
    if best.0 > 1e-9 * scale {
        return Err(DiskError::NotProper);
    }
    let (mut side, mut s) = (best.1, best.2);
    let side_len = (region.vertex((side + 1) % m) - region.vertex(side)).norm();
    if s * side_len > side_len - 1e-12 * scale {
        side = (side + 1) % m;
        s = 0.0;
    }
    let mut along = 0.0;
    for k in 0..side {
        along += (region.vertex((k + 1) % m) - region.vertex(k)).norm();
    }
    along += s * (region.vertex((side + 1) % m) - region.vertex(side)).norm();
    Ok(BoundaryPosition { side, s, along })
}

/// Boundary chain from position `a` counterclockwise to position `b`:
/// the two endpoints plus every region vertex passed between them.
fn boundary_chain(region: &Polygon, a: BoundaryPosition, b: BoundaryPosition) -> Vec<Point2> {
    let m = region.len();
    let scale = region.diameter();
    let point_at = |p: BoundaryPosition| -> Point2 {
        let v0 = region.vertex(p.side);
        let v1 = region.vertex((p.side + 1) % m);
        v0 + (v1 - v0) * p.s
    };
    let mut out = vec![point_at(a)];
    let total = region.perimeter();
    let span = {
        let d = b.along - a.along;
        if d > 1e-12 * (1.0 + scale) {
            d
        } else {
            d + total
        }
    };
    let mut vert_along = 0.0f64;
    let mut verts: Vec<(f64, Point2)> = Vec::with_capacity(m);
    for k in 0..m {
        verts.push((vert_along, region.vertex(k)));
        vert_along += (region.vertex((k + 1) % m) - region.vertex(k)).norm();
    }
    let mut marks: Vec<(f64, Point2)> = Vec::new();
    for &(va, vp) in &verts {
        let mut rel = va - a.along;
        if rel <= 1e-12 * (1.0 + scale) {
            rel += total;
        }
        if rel < span - 1e-12 * (1.0 + scale) {
            marks.push((rel, vp));
        }
    }
    marks.sort_unstable_by(|x, y| x.0.total_cmp(&y.0));
    for (_, vp) in marks {
        if (vp - *out.last().unwrap()).norm() > 1e-12 * (1.0 + scale) {
            out.push(vp);
        }
    }
    let pb = point_at(b);
    if (pb - *out.last().unwrap()).norm() > 1e-12 * (1.0 + scale) {
        out.push(pb);
    }
    out
}

/// One side of a split region: the chart map of the subregion and the
/// extension of the correspondence onto its image.
#[derive(Clone, Debug)]
struct CrosscutSide {
    chart: DiskPolygonMap,
    source: Vec<Point2>,
    image: Vec<Point2>,
    ext: DiskEmbeddingExtension,
}

/// Extension of a homeomorphism supported on a crosscut arc of a polygonal
/// region to a self-homeomorphism of the closed region fixing its boundary.
///
/// The region is split along the arc; each half is mapped to the disk by
/// its own chart, the boundary correspondence (identity on the region
/// boundary, the given map on the arc) is extended over the image half, and
/// the two extensions are glued along the arc, where both restrict to the
/// given map exactly.
#[derive(Clone, Debug)]
pub struct ProperArcExtension {
    region: Polygon,
    arc: Vec<Point2>,
    image: Vec<Point2>,
    plus: Option<CrosscutSide>,
    minus: Option<CrosscutSide>,
    identity: bool,
}

/// Piecewise-linear transport of a point near polyline `src` to polyline
/// `dst`: segment `k` of the source maps affinely onto segment `k` of the
/// destination, which is exactly the correspondence the chart extensions
/// use on their arc sides.
fn polyline_transport(src: &[Point2], dst: &[Point2], p: Point2) -> Point2 {
    let mut best = (f64::INFINITY, 0usize, 0.0f64);
    for k in 0..src.len() - 1 {
        let d = segment_distance(p, src[k], src[k + 1]);
        if d < best.0 {
            let (_, s) = segment_project(p, src[k], src[k + 1]);
            best = (d, k, s.clamp(0.0, 1.0));
        }
    }
    let k = best.1;
    dst[k] + (dst[k + 1] - dst[k]) * best.2
}

/// Builds the crosscut extension for `arc` mapped onto `image` inside
/// `region`.
///
/// Both polylines share their endpoints on the region boundary; interior
/// points must lie strictly inside. The correspondence is linear on each
/// arc segment.
pub fn extend_proper_arc(
    region: &Polygon,
    arc: &[Point2],
    image: &[Point2],
    tol: f64,
) -> Result<ProperArcExtension, DiskError> {
    let scale = 1.0 + region.diameter();
    if arc.len() < 2 || image.len() != arc.len() {
        return Err(DiskError::NotProper);
    }
    let n = arc.len();
    if (arc[0] - image[0]).norm() > 1e-9 * scale
        || (arc[n - 1] - image[n - 1]).norm() > 1e-9 * scale
    {
        return Err(DiskError::NotProper);
    }
    if (arc[0] - arc[n - 1]).norm() < 1e-9 * scale {
        return Err(DiskError::NotProper);
    }
    for p in &arc[1..n - 1] {
        if !region.strictly_contains(*p, 1e-9 * scale) {
            return Err(DiskError::NotProper);
        }
    }
    for p in &image[1..n - 1] {
        if !region.strictly_contains(*p, 1e-9 * scale) {
            return Err(DiskError::NotProper);
        }
    }
    let apos = boundary_position(region, arc[0])?;
    let bpos = boundary_position(region, arc[n - 1])?;

    let chain_ab = boundary_chain(region, apos, bpos);
    let chain_ba = boundary_chain(region, bpos, apos);

    let assemble = |chain: &[Point2], inner: &[Point2]| -> Vec<Point2> {
        let mut out = chain.to_vec();
        for p in inner {
            if (*p - *out.last().unwrap()).norm() > 1e-12 * scale {
                out.push(*p);
            }
        }
        if out.len() > 1 && (out[0] - *out.last().unwrap()).norm() < 1e-12 * scale {
            out.pop();
        }
        out
    };
    let rev_inner: Vec<Point2> = arc[1..n - 1].iter().rev().copied().collect();
    let fwd_inner: Vec<Point2> = arc[1..n - 1].to_vec();
    let rev_inner_img: Vec<Point2> = image[1..n - 1].iter().rev().copied().collect();
    let fwd_inner_img: Vec<Point2> = image[1..n - 1].to_vec();

    let plus_src = assemble(&chain_ab, &rev_inner);
    let minus_src = assemble(&chain_ba, &fwd_inner);
    let plus_img = assemble(&chain_ab, &rev_inner_img);
    let minus_img = assemble(&chain_ba, &fwd_inner_img);

    let identity = arc
        .iter()
        .zip(image)
        .all(|(a, b)| (*a - *b).norm() <= 1e-15 * scale);
    if identity {
        return Ok(ProperArcExtension {
            region: region.clone(),
            arc: arc.to_vec(),
            image: image.to_vec(),
            plus: None,
            minus: None,
            identity: true,
        });
    }

    let build_side = |src: &[Point2], img: &[Point2]| -> Result<CrosscutSide, DiskError> {
        let src_poly = Polygon::new(src).map_err(|_| DiskError::NotProper)?;
        let img_poly = Polygon::new(img).map_err(|_| DiskError::NotProper)?;
        let chart = solve_disk_polygon(&src_poly, tol)?;
        let msrc = src.len();
        let targets: Vec<(Point2, Point2)> = (0..msrc)
            .map(|k| (img[k], img[(k + 1) % msrc]))
            .collect();
        let curve = BoundaryCurve::ChartSides {
            chart: chart.clone(),
            targets,
        };
        let ext = build_disk_extension(&img_poly, curve, tol)?;
        Ok(CrosscutSide {
            chart,
            source: src.to_vec(),
            image: img.to_vec(),
            ext,
        })
    };
    let plus = build_side(&plus_src, &plus_img)?;
    let minus = build_side(&minus_src, &minus_img)?;

    Ok(ProperArcExtension {
        region: region.clone(),
        arc: arc.to_vec(),
        image: image.to_vec(),
        plus: Some(plus),
        minus: Some(minus),
        identity: false,
    })
}

impl ProperArcExtension {
    /// The ambient region.
    pub fn region(&self) -> &Polygon {
        &self.region
    }

    /// The source arc.
    pub fn arc(&self) -> &[Point2] {
        &self.arc
    }

    /// The image arc.
    pub fn image(&self) -> &[Point2] {
        &self.image
    }

    /// True when the arc homeomorphism is the identity, in which case the
    /// extension is the identity map by construction.
    pub fn is_identity(&self) -> bool {
        self.identity
    }

    fn arc_distance(&self, p: Point2) -> f64 {
        let mut d = f64::INFINITY;
        for w in self.arc.windows(2) {
            d = d.min(segment_distance(p, w[0], w[1]));
        }
        d
    }

    fn image_distance(&self, p: Point2) -> f64 {
        let mut d = f64::INFINITY;
        for w in self.image.windows(2) {
            d = d.min(segment_distance(p, w[0], w[1]));
        }
        d
    }

    /// Value of the extended homeomorphism at `x`.
    ///
    /// Points on the arc map through the given correspondence exactly;
    /// points outside the closed region (or on its boundary) are fixed.
    pub fn eval(&self, x: Point2) -> Result<Point2, DiskError> {
        if self.identity {
            return Ok(x);
        }
        let scale = 1.0 + self.region.diameter();
        if self.arc_distance(x) <= 1e-11 * scale {
            return Ok(polyline_transport(&self.arc, &self.image, x));
        }
        if !self.region.strictly_contains(x, 1e-11 * scale) {
            return Ok(x);
        }
        let plus = self.plus.as_ref().unwrap();
        let minus = self.minus.as_ref().unwrap();
        let chosen = if point_in_polygon(&plus.source, x) {
            Some(plus)
        } else if point_in_polygon(&minus.source, x) {
            Some(minus)
        } else {
            None
        };
        match chosen {
            Some(s) => {
                let zeta = s.chart.invert(x)?;
                s.ext.eval(zeta)
            }
            // Interior but claimed by neither half: the point sits on the
            // shared cut within roundoff, transport it along the arc.
            None => Ok(polyline_transport(&self.arc, &self.image, x)),
        }
    }

    /// Value of the inverse homeomorphism at `y`.
    pub fn invert(&self, y: Point2) -> Result<Point2, DiskError> {
        if self.identity {
            return Ok(y);
        }
        let scale = 1.0 + self.region.diameter();
        if self.image_distance(y) <= 1e-11 * scale {
            return Ok(polyline_transport(&self.image, &self.arc, y));
        }
        if !self.region.strictly_contains(y, 1e-11 * scale) {
            return Ok(y);
        }
        let plus = self.plus.as_ref().unwrap();
        let minus = self.minus.as_ref().unwrap();
        let chosen = if point_in_polygon(&plus.image, y) {
            Some(plus)
        } else if point_in_polygon(&minus.image, y) {
            Some(minus)
        } else {
            None
        };
        match chosen {
            Some(s) => {
                let z = s.ext.invert_eval(y)?;
                s.chart.eval(z)
            }
            None => Ok(polyline_transport(&self.image, &self.arc, y)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::wrap_signed;
    use crate::oracle::elliptic_k;
    use proptest::prelude::*;

    fn pentagon() -> Polygon {
        Polygon::new(&[
            cx(0.0, 0.0),
            cx(2.0, 0.0),
            cx(2.6, 1.2),
            cx(1.0, 2.1),
            cx(-0.7, 1.0),
        ])
        .unwrap()
    }

    #[test]
    fn triangle_needs_no_parameter_iteration() {
        let tri = Polygon::new(&[cx(0.0, 0.0), cx(1.0, 0.0), cx(0.3, 0.8)]).unwrap();
        let map = solve_disk_polygon(&tri, 1e-10).unwrap();
        assert_eq!(map.residual_inf, 0.0);
        assert!(map.vertex_residual <= 1e-11, "closure {}", map.vertex_residual);
        for k in 0..3 {
            let w = map.boundary_point(map.prevertex_angle(k));
            assert!((w - tri.vertex(k)).norm() <= 1e-10);
        }
    }

    #[test]
    fn square_prevertices_are_equally_spaced() {
        let sq = Polygon::new(&[cx(1.0, -1.0), cx(1.0, 1.0), cx(-1.0, 1.0), cx(-1.0, -1.0)])
            .unwrap();
        let map = solve_disk_polygon(&sq, 1e-10).unwrap();
        for k in 0..4 {
            let gap = gap_after(&map.base_prevertices, k);
            assert!((gap - 0.5 * PI).abs() <= 1e-8, "gap {k} = {gap}");
        }
        assert!(map.vertex_residual <= 1e-10);
    }

    #[test]
    fn rectangle_prevertices_match_elliptic_integrals() {
        let rect = Polygon::new(&[cx(0.0, 0.0), cx(2.0, 0.0), cx(2.0, 1.0), cx(0.0, 1.0)])
            .unwrap();
        let map = solve_disk_polygon(&rect, 1e-11).unwrap();
        // Cayley transform of the prevertices to the real line, taken from
        // a basepoint inside the gap before the first prevertex.
        let th = &map.base_prevertices;
        let c = th[0] - 0.5 * wrap_angle(th[0] - th[3]);
        let x: Vec<f64> = th
            .iter()
            .map(|&t| libm::tan(0.5 * (wrap_angle(t - c) - PI)))
            .collect();
        assert!(x.windows(2).all(|w| w[0] < w[1]));
        // Cross ratio pinned to the normal form (-1/k, -1, 1, 1/k), where
        // the conformally equivalent rectangle has aspect K'(k) / 2K(k).
        let cr = ((x[2] - x[0]) * (x[3] - x[1])) / ((x[2] - x[1]) * (x[3] - x[0]));
        let k = (2.0 * cr - 1.0) - 2.0 * libm::sqrt(cr * (cr - 1.0));
        assert!((0.0..1.0).contains(&k), "modulus k = {k}");
        let kk = elliptic_k(k).unwrap();
        let kp = elliptic_k(libm::sqrt(1.0 - k * k)).unwrap();
        let aspect = kp / (2.0 * kk);
        assert!(
            (aspect - 2.0).abs() <= 1e-6,
            "aspect {aspect} for modulus {k}"
        );
    }

    #[test]
    fn pentagon_side_lengths_are_reproduced() {
        let map = solve_disk_polygon(&pentagon(), 1e-10).unwrap();
        assert!(map.residual_inf <= 1e-10);
        assert!(map.vertex_residual <= 1e-8, "chained {}", map.vertex_residual);
    }

    #[test]
    fn boundary_point_and_invert_round_trip() {
        let map = solve_disk_polygon(&pentagon(), 1e-10).unwrap();
        for j in 0..40 {
            let t = TAU * (j as f64 + 0.31) / 40.0;
            let w = map.boundary_point(t);
            let t2 = map.boundary_invert(w).unwrap();
            assert!(
                wrap_signed(t2 - t).abs() <= 1e-9,
                "angle {t} came back as {t2}"
            );
        }
        for k in 0..5 {
            let t = map.boundary_invert(map.polygon().vertex(k)).unwrap();
            assert!(wrap_signed(t - map.prevertex_angle(k)).abs() <= 1e-9);
        }
    }

    #[test]
    fn interior_inversion_round_trips() {
        let map = solve_disk_polygon(&pentagon(), 1e-10).unwrap();
        for &r in &[0.3f64, 0.7, 0.95] {
            for j in 0..16 {
                let z = Complex64::from_polar(r, TAU * (j as f64 + 0.5) / 16.0);
                let w = map.eval(z).unwrap();
                let z2 = map.invert(w).unwrap();
                assert!((z2 - z).norm() <= 1e-8, "z {z} -> {z2}");
            }
        }
        let w0 = map.eval(cx(0.0, 0.0)).unwrap();
        assert!(map.invert(w0).unwrap().norm() <= 1e-9);
    }

    #[test]
    fn three_point_normalization_hits_targets() {
        let map = solve_disk_polygon(&pentagon(), 1e-10).unwrap();
        let sources = [0.3, 2.0, 4.4];
        let targets = [
            map.boundary_point(0.9),
            map.boundary_point(2.9),
            map.boundary_point(5.0),
        ];
        let fixed = map.normalize_three(sources, targets).unwrap();
        for (s, t) in sources.iter().zip(&targets) {
            let w = fixed.boundary_point(*s);
            assert!((w - t).norm() <= 1e-8, "target missed by {}", (w - t).norm());
        }
        let swapped = map.normalize_three(sources, [targets[1], targets[0], targets[2]]);
        assert_eq!(swapped.unwrap_err(), DiskError::OrderMismatch);
    }

    #[test]
    fn cone_extension_rotates_each_circle() {
        let g = CircleHomeo::rotation(0.7);
        let cone = cone_extend(&g);
        let z = Complex64::from_polar(0.5, 1.0);
        let w = cone.eval(z);
        assert!((w - Complex64::from_polar(0.5, 1.7)).norm() <= 1e-12);
        assert!((cone.invert(w) - z).norm() <= 1e-12);
        assert_eq!(cone.eval(cx(0.0, 0.0)), cx(0.0, 0.0));
    }

    fn hexagon_embedding() -> PolygonalCircleEmbedding {
        let params = [0.0, 0.9, 1.7, 3.0, 4.2, 5.3];
        let radii = [1.1, 0.9, 1.2, 1.0, 1.15, 0.95];
        let angles = [0.1, 1.0, 1.9, 3.1, 4.3, 5.4];
        let samples: Vec<(f64, Point2)> = params
            .iter()
            .zip(radii.iter().zip(&angles))
            .map(|(&t, (&r, &a))| (t, Complex64::from_polar(r, a)))
            .collect();
        PolygonalCircleEmbedding::new(&samples).unwrap()
    }

    #[test]
    fn circle_embedding_extension_restricts_to_the_embedding() {
        let f = hexagon_embedding();
        let ext = extend_circle_embedding(&f, 1e-10).unwrap();
        let mut worst = 0.0f64;
        for j in 0..100 {
            let t = TAU * (j as f64 + 0.13) / 100.0;
            let w = ext.eval(Complex64::from_polar(1.0, t)).unwrap();
            worst = worst.max((w - f.eval(t)).norm());
        }
        assert!(worst <= 1e-8, "boundary restriction off by {worst}");
        for j in 0..24 {
            let z = Complex64::from_polar(0.6, TAU * (j as f64 + 0.4) / 24.0);
            let w = ext.eval(z).unwrap();
            let z2 = ext.invert_eval(w).unwrap();
            assert!((z2 - z).norm() <= 1e-7, "round trip {z} -> {z2}");
        }
    }

    #[test]
    fn inscribed_polygon_extension_stays_near_identity() {
        let samples: Vec<(f64, Point2)> = (0..24)
            .map(|j| {
                let t = TAU * j as f64 / 24.0;
                (t, Complex64::from_polar(1.0, t))
            })
            .collect();
        let f = PolygonalCircleEmbedding::new(&samples).unwrap();
        let ext = extend_circle_embedding(&f, 1e-10).unwrap();
        let mut worst = 0.0f64;
        for j in 0..32 {
            let z = Complex64::from_polar(0.5, TAU * (j as f64 + 0.11) / 32.0);
            let w = ext.eval(z).unwrap();
            worst = worst.max((w - z).norm());
        }
        assert!(worst <= 0.05, "deviation from identity {worst}");
    }

    #[test]
    fn reversing_embedding_extends_through_conjugation() {
        let f = hexagon_embedding().conjugated();
        assert!(!f.orientation_preserving());
        let ext = extend_circle_embedding(&f, 1e-10).unwrap();
        assert!(ext.reflected());
        let mut worst = 0.0f64;
        for j in 0..60 {
            let t = TAU * (j as f64 + 0.29) / 60.0;
            let w = ext.eval(Complex64::from_polar(1.0, t)).unwrap();
            worst = worst.max((w - f.eval(t)).norm());
        }
        assert!(worst <= 1e-8, "reflected restriction off by {worst}");
    }

    fn square_region() -> Polygon {
        Polygon::new(&[cx(-1.0, -1.0), cx(1.0, -1.0), cx(1.0, 1.0), cx(-1.0, 1.0)]).unwrap()
    }

    #[test]
    fn crosscut_identity_extends_to_the_identity() {
        let region = square_region();
        let arc = [cx(0.0, -1.0), cx(0.0, -0.3), cx(0.0, 0.4), cx(0.0, 1.0)];
        let ext = extend_proper_arc(&region, &arc, &arc, 1e-10).unwrap();
        assert!(ext.is_identity());
        for &p in &[cx(0.5, 0.2), cx(-0.4, -0.6), cx(0.0, 0.1)] {
            assert_eq!(ext.eval(p).unwrap(), p);
            assert_eq!(ext.invert(p).unwrap(), p);
        }
    }

    #[test]
    fn crosscut_bump_restricts_matches_and_round_trips() {
        let region = square_region();
        let arc = [cx(0.0, -1.0), cx(0.0, -0.3), cx(0.0, 0.4), cx(0.0, 1.0)];
        let image = [cx(0.0, -1.0), cx(0.08, -0.3), cx(-0.05, 0.4), cx(0.0, 1.0)];
        let ext = extend_proper_arc(&region, &arc, &image, 1e-10).unwrap();
        assert!(!ext.is_identity());

        // Exact transport on the arc itself.
        let on_arc = cx(0.0, 0.15);
        let mapped = ext.eval(on_arc).unwrap();
        let expected = polyline_transport(ext.arc(), ext.image(), on_arc);
        assert!((mapped - expected).norm() <= 1e-14);

        // The two half-region extensions agree across the cut.
        let left = ext.eval(cx(-1e-6, 0.15)).unwrap();
        let right = ext.eval(cx(1e-6, 0.15)).unwrap();
        assert!((left - right).norm() <= 1e-3, "seam gap {}", (left - right).norm());
        assert!((left - expected).norm() <= 1e-3);

        // Interior round trips through both halves.
        for &p in &[cx(0.5, 0.2), cx(-0.4, 0.5), cx(0.3, -0.6), cx(-0.6, -0.2)] {
            let y = ext.eval(p).unwrap();
            let p2 = ext.invert(y).unwrap();
            assert!((p2 - p).norm() <= 1e-6, "round trip {p} -> {p2}");
        }

        // The region boundary stays pointwise fixed.
        assert_eq!(ext.eval(cx(1.0, 0.3)).unwrap(), cx(1.0, 0.3));
    }

    #[test]
    fn crosscut_rejects_improper_data() {
        let region = square_region();
        let arc = [cx(0.0, -1.0), cx(0.0, 0.0), cx(0.0, 1.0)];
        let short = [cx(0.0, -1.0), cx(0.0, 1.0)];
        assert_eq!(
            extend_proper_arc(&region, &arc, &short, 1e-10).unwrap_err(),
            DiskError::NotProper
        );
        let outside = [cx(0.0, -1.0), cx(1.5, 0.0), cx(0.0, 1.0)];
        assert_eq!(
            extend_proper_arc(&region, &outside, &outside, 1e-10).unwrap_err(),
            DiskError::NotProper
        );
        let moved_end = [cx(0.0, -1.0), cx(0.1, 0.0), cx(0.1, 1.0)];
        assert_eq!(
            extend_proper_arc(&region, &arc, &moved_end, 1e-10).unwrap_err(),
            DiskError::NotProper
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn random_quadrilaterals_solve_and_round_trip(
            a0 in 0.2f64..1.2,
            a1 in 1.8f64..2.8,
            a2 in 3.4f64..4.4,
            a3 in 5.0f64..6.0,
            r0 in 0.8f64..1.3,
            r1 in 0.8f64..1.3,
            r2 in 0.8f64..1.3,
            r3 in 0.8f64..1.3,
        ) {
            let pts = [
                Complex64::from_polar(r0, a0),
                Complex64::from_polar(r1, a1),
                Complex64::from_polar(r2, a2),
                Complex64::from_polar(r3, a3),
            ];
            let poly = Polygon::new(&pts).unwrap();
            let map = solve_disk_polygon(&poly, 1e-9).unwrap();
            prop_assert!(map.vertex_residual <= 1e-6);
            let w = map.boundary_point(1.0);
            let t = map.boundary_invert(w).unwrap();
            prop_assert!(wrap_signed(t - 1.0).abs() <= 1e-6);
        }
    }
}
