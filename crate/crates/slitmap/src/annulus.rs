//! Conformal maps from a round annulus onto the radius-2 disk with a tree
//! removed.
//!
//! For an embedded tree `T` inside `D(2)` there is a unique `r` in `(0, 2)`
//! and a conformal homeomorphism `h : A(r, 2) -> D(2) \ T`, normalized by
//! `h(2) = 2`. The inner circle traces the doubled boundary walk of the
//! tree: each walk corner `k` has a prevertex at angle `theta_k` on the
//! inner circle, with exponent `beta_k = sector/pi - 1`.
//!
//! The derivative is represented as
//!
//! ```text
//! h'(z) = C * prod_k [ (1 - a_k/z) * Pi(z/a_k) ]^{beta_k}
//!           * exp( sum_{0 < |n| <= N} c_n phi_n(z) )
//! ```
//!
//! with `a_k = q e^{i theta_k}` the prevertices (everything in unit
//! coordinates, outer radius 1, `q = r/2`), `Pi` the reflection product of
//! the annulus, evaluated through its logarithmic series, and `phi_n` a
//! Laurent basis scaled to unit modulus on its dominant circle (`z^n`
//! outside, `(z/q)^n` inside). The product alone satisfies the corner
//! structure but not the outer-circle roundness; the exponential correction
//! closes that gap and its coefficients decay geometrically.
//!
//! Unknowns are `log q`, the logs of all but one prevertex gap (the first
//! prevertex is pinned at angle zero), `log C`, an integration constant,
//! and the correction coefficients. They are determined by least squares on
//! five residual families: outer roundness `|h| = 1`, closure of the
//! derivative around the annulus, outer winding (monotone, total one turn;
//! this excludes folded and multiply-covered impostor solutions),
//! straightness of each inner arc in its side direction (collocation
//! density scales with the Laurent order, which excludes aliased
//! micro-folds), and corner interpolation through radial Gauss-Jacobi
//! integrals from the outer circle.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::geom::{boundary_walk, validate_tree, BoundaryWalk, PlanarTree, Point2, GEOM_TOL};
use crate::num::fft::{fft, ifft};
use crate::num::lm::{solve_least_squares, LeastSquaresOptions};
use crate::num::quad::{gauss_jacobi, gauss_legendre};
use crate::num::wrap_angle;
use crate::oracle::solve_capacity_grid;

const TAU: f64 = core::f64::consts::TAU;
const PI: f64 = core::f64::consts::PI;

#[inline]
fn cx(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Errors from the annulus solver and its evaluators.
#[derive(Clone, Debug, PartialEq)]
pub enum AnnulusError {
    /// The parameter iteration did not reach the requested residual level.
    NoConvergence,
    /// The input is not a valid embedded tree in the open radius-2 disk.
    DegenerateTree,
    /// Evaluation point outside the closed annulus / closed slit disk.
    OutsideDomain,
    /// A trace query does not lie on the tree.
    NotOnTree,
    /// A trace query lies on the tree but not on the requested side.
    SideMismatch,
}

impl core::fmt::Display for AnnulusError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            AnnulusError::NoConvergence => write!(f, "parameter problem did not converge"),
            AnnulusError::DegenerateTree => write!(f, "input is not an embedded tree in the disk"),
            AnnulusError::OutsideDomain => write!(f, "point outside the map domain"),
            AnnulusError::NotOnTree => write!(f, "point does not lie on the tree"),
            AnnulusError::SideMismatch => write!(f, "point does not lie on the requested side"),
        }
    }
}

impl core::error::Error for AnnulusError {}

/// Discretization choices for the solve; the defaults are the validated
/// ones and rarely need changing.
#[derive(Clone, Debug)]
pub struct SolverConfig {
    /// Laurent correction order `N` (coefficients `c_n`, `0 < |n| <= N`).
    pub laurent_order: usize,
    /// Outer-circle collocation grid (power of two, FFT-based residuals).
    pub outer_grid: usize,
    /// Radial Gauss-Jacobi nodes per corner integral inside the solve.
    pub corner_nodes: usize,
    /// Gauss-Jacobi / Gauss-Legendre nodes for post-solve evaluation
    /// quadratures.
    pub eval_nodes: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { laurent_order: 24, outer_grid: 256, corner_nodes: 40, eval_nodes: 48 }
    }
}

/// Solved conformal map `h : A(r, 2) -> D(2) \ T`, `h(2) = 2`.
///
/// All public angles refer to the standard parametrization of `A(r, 2)`;
/// internally the map is stored in unit coordinates (outer radius 1, inner
/// radius `q = r/2`) with the first prevertex pinned at internal angle
/// zero, and `outer_prevertex_gauge` is the rotation between the two.
#[derive(Clone, Debug)]
pub struct AnnulusTreeMap {
    /// The tree, in the radius-2 world.
    pub tree: PlanarTree,
    /// Inner radius of the annulus.
    pub r: f64,
    /// Internal rotation `t*` such that `h(2) = 2`: unit-coordinate
    /// evaluation uses `zeta = e^{i t*} z / 2`.
    pub outer_prevertex_gauge: f64,
    /// Angles on the inner circle of `A(r, 2)` whose prime ends are the walk
    /// corners (one per walk corner, counterclockwise).
    pub inner_prevertices: Vec<f64>,
    /// Multiplicative constant `C` of the derivative representation.
    pub sc_constant: Complex64,
    /// Laurent correction order used.
    pub truncation_level: usize,
    /// Discretization the map was solved with.
    pub config: SolverConfig,
    /// Supremum of the solver residuals at the accepted parameters.
    pub residual_inf: f64,

    // Internal representation (unit coordinates).
    q: f64,
    thetas: Vec<f64>,
    betas: Vec<f64>,
    side_dirs: Vec<f64>,
    log_c: Complex64,
    a_const: Complex64,
    coeffs: Vec<Complex64>,
    walk: BoundaryWalk,
    /// Walk corner images in unit coordinates (targets; the solved corners
    /// agree with these to within the residual level).
    corners_unit: Vec<Complex64>,
    /// Ladder of local Laurent expansions of `h` on concentric circles
    /// marching from the outer circle toward the inner one. Rung `c` is
    /// valid for radii in `[radius of rung c+1, radius of rung c]`; the
    /// march stops at `sliver_rho`, below which `h` is evaluated by graded
    /// radial quadrature. Re-expansion is what keeps every rung's
    /// coefficients above the FFT noise floor; a single outer-circle series
    /// would drown in amplified roundoff near the tree.
    rings: Vec<RingSeries>,
    /// Radius of the deepest ladder rung.
    sliver_rho: f64,
    /// Per-side monotone tables `(t, |h - corner|)` for trace inversion.
    arc_tables: Vec<ArcTable>,
    /// Tree scaled into the unit disk.
    tree_unit: PlanarTree,
    /// Cached series weights for the annulus product at this `q`.
    wm: Vec<f64>,
    /// Cached per-corner Gauss-Jacobi rules for evaluation quadratures.
    eval_jac: Vec<(Vec<f64>, Vec<f64>)>,
    /// Sparse `(zeta, h(zeta))` samples seeding inverse iteration.
    seed_grid: Vec<(Complex64, Complex64)>,
}

#[derive(Clone, Debug)]
struct ArcTable {
    ts: Vec<f64>,
    dist: Vec<f64>,
}

/// One rung of the evaluation ladder: the restriction of `h` to the circle
/// of `radius`, as constant plus FFT-ordered Fourier coefficients, summed
/// only up to `k_cut` (the noise cut-off).
#[derive(Clone, Debug)]
struct RingSeries {
    radius: f64,
    a0: Complex64,
    coef: Vec<Complex64>,
    k_cut: usize,
}

impl RingSeries {
    /// `h(rho e^{i theta})` by the rung's truncated Laurent sum.
    fn eval(&self, zeta: Complex64) -> Complex64 {
        let m = self.coef.len();
        let zr = zeta / self.radius;
        let zr_inv = cx(1.0, 0.0) / zr;
        let mut up = cx(1.0, 0.0);
        let mut dn = cx(1.0, 0.0);
        let mut acc = self.a0;
        let kmax = self.k_cut.min(m / 2 - 1);
        for k in 1..=kmax {
            up *= zr;
            dn *= zr_inv;
            acc += self.coef[k] * up;
            acc += self.coef[m - k] * dn;
        }
        acc
    }
}

/// Integer frequency for FFT bin `j` of an `m`-point grid (negative
/// frequencies in the upper half, matching the usual DFT layout).
#[inline]
fn fft_freq(j: usize, m: usize) -> i64 {
    if j >= m.div_ceil(2) {
        j as i64 - m as i64
    } else {
        j as i64
    }
}

/// Parameters of the derivative representation during a solve.
struct DerivParams<'a> {
    q: f64,
    thetas: &'a [f64],
    betas: &'a [f64],
    log_c: Complex64,
    /// Laurent coefficients, layout `[c_{-N} .. c_{-1}, c_1 .. c_N]`.
    coeffs: &'a [Complex64],
    /// Series weights `q^{2m} / (m (1 - q^{2m}))` for the annulus product.
    wm: &'a [f64],
}

fn product_series_weights(q: f64) -> Vec<f64> {
    // Terms decay like q^m on the evaluation domain; run to 1e-17.
    let mut wm = Vec::new();
    let mut q2m = 1.0f64;
    let q2 = q * q;
    for m in 1..=4000usize {
        q2m *= q2;
        let w = q2m / (m as f64 * (1.0 - q2m));
        wm.push(w);
        // |t| <= 1/q, so the term size is at most q^(2m) * q^(-m) = q^m.
        if libm::pow(q, m as f64) < 1e-17 {
            break;
        }
    }
    wm
}

/// `log h'(z)` with the real part clamped so that `exp` stays finite when
/// the optimizer probes wild coefficients.
fn log_hprime(z: Complex64, p: &DerivParams<'_>) -> Complex64 {
    log_hprime_skip(z, p, usize::MAX)
}

/// Same as [`log_hprime`] but with corner `skip`'s singular factor
/// `(1 - a/z)^beta` left out; the corner quadrature restores it in a
/// form that stays finite when `z` rounds onto the prevertex itself.
fn log_hprime_skip(z: Complex64, p: &DerivParams<'_>, skip: usize) -> Complex64 {
    let mut acc = p.log_c;
    for (j, (&th, &bk)) in p.thetas.iter().zip(p.betas).enumerate() {
        let a = Complex64::from_polar(p.q, th);
        if j != skip {
            // Singular factor (1 - a/z), principal branch.
            acc += (cx(1.0, 0.0) - a / z).ln() * bk;
        }
        // Annulus reflection product via its logarithmic series:
        // log Pi(t) = -sum_m wm (t^m + t^{-m}), t = z / a. Any 2*pi*i
        // branch offset against the literal product is irrelevant under exp.
        let t = z / a;
        let tinv = cx(1.0, 0.0) / t;
        let mut u = cx(1.0, 0.0);
        let mut v = cx(1.0, 0.0);
        let mut s = cx(0.0, 0.0);
        for &w in p.wm {
            u *= t;
            v *= tinv;
            s += (u + v) * w;
        }
        acc -= s * bk;
    }
    let n = p.coeffs.len() / 2;
    if n > 0 {
        // Negative side uses (z/q)^{-k}, positive side z^{k}; both have unit
        // modulus on their dominant circle, keeping coefficients comparable.
        let zq_inv = cx(p.q, 0.0) / z;
        let mut v = cx(1.0, 0.0);
        for k in 1..=n {
            v *= zq_inv;
            acc += p.coeffs[n - k] * v;
        }
        let mut u = cx(1.0, 0.0);
        for k in 1..=n {
            u *= z;
            acc += p.coeffs[n - 1 + k] * u;
        }
    }
    cx(acc.re.min(60.0), acc.im)
}

/// The least-squares parameter problem for one tree.
struct ParamProblem {
    /// Walk size (number of corners = sides).
    m: usize,
    /// Laurent order.
    n_laurent: usize,
    /// Outer grid size.
    m1: usize,
    /// Walk corner targets, unit coordinates.
    corners: Vec<Complex64>,
    betas: Vec<f64>,
    side_dirs: Vec<f64>,
    /// Straightness collocation counts per side (fixed at warm-start time).
    nstr: Vec<usize>,
    /// Radial Gauss-Jacobi rules per corner, on [-1, 1] with weight
    /// (1+x)^beta_k.
    jac: Vec<(Vec<f64>, Vec<f64>)>,
}

impl ParamProblem {
    fn unknown_count(&self) -> usize {
        self.m + 4 + 4 * self.n_laurent
    }

    fn residual_count(&self) -> usize {
        2 * self.m1 + 3 + self.nstr.iter().sum::<usize>() + 2 * self.m
    }

    /// Index of the first corner residual (used by the alignment seed).
    fn corner_residual_offset(&self) -> usize {
        2 * self.m1 + 3 + self.nstr.iter().sum::<usize>()
    }

    fn pack(
        &self,
        q: f64,
        thetas: &[f64],
        log_c: Complex64,
        a_const: Complex64,
        coeffs: &[Complex64],
    ) -> Vec<f64> {
        let m = self.m;
        let mut x = Vec::with_capacity(self.unknown_count());
        x.push(libm::log(q));
        for k in 0..m - 1 {
            let next = if k + 1 < m { thetas[k + 1] } else { thetas[0] + TAU };
            x.push(libm::log(next - thetas[k]));
        }
        x.push(log_c.re);
        x.push(log_c.im);
        x.push(a_const.re);
        x.push(a_const.im);
        for c in coeffs {
            x.push(c.re);
        }
        for c in coeffs {
            x.push(c.im);
        }
        x
    }

    /// Decodes the parameter vector; returns `None` when outside the sane
    /// region (the residual fills with a large constant instead).
    fn unpack(&self, x: &[f64]) -> Option<(f64, Vec<f64>, Complex64, Complex64, Vec<Complex64>, f64)> {
        let m = self.m;
        let q = libm::exp(x[0]);
        let mut thetas = Vec::with_capacity(m);
        thetas.push(0.0);
        let mut acc = 0.0;
        for k in 0..m - 1 {
            acc += libm::exp(x[1 + k]);
            thetas.push(acc);
        }
        let last_gap = TAU - acc;
        let log_c = cx(x[m], x[m + 1]);
        let a_const = cx(x[m + 2], x[m + 3]);
        let ncs = 2 * self.n_laurent;
        let coeffs: Vec<Complex64> = (0..ncs)
            .map(|i| cx(x[m + 4 + i], x[m + 4 + ncs + i]))
            .collect();
        if !(1e-6..=0.999).contains(&q) || last_gap <= 1e-8 {
            return None;
        }
        Some((q, thetas, log_c, a_const, coeffs, last_gap))
    }

    fn residuals(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.residual_count());
        let decoded = match self.unpack(x) {
            Some(d) => d,
            None => {
                out.fill(1e3);
                return;
            }
        };
        let (q, thetas, log_c, a_const, coeffs, _) = decoded;
        let wm = product_series_weights(q);
        let p = DerivParams {
            q,
            thetas: &thetas,
            betas: &self.betas,
            log_c,
            coeffs: &coeffs,
            wm: &wm,
        };
        let m1 = self.m1;
        // Outer circle: g = h' * i z on the uniform grid.
        let mut g = vec![cx(0.0, 0.0); m1];
        for (j, gj) in g.iter_mut().enumerate() {
            let t = TAU * j as f64 / m1 as f64;
            let z = Complex64::from_polar(1.0, t);
            *gj = log_hprime(z, &p).exp() * cx(0.0, 1.0) * z;
        }
        let mut spec = g.clone();
        fft(&mut spec);
        let scale = 1.0 / m1 as f64;
        for s in spec.iter_mut() {
            *s *= scale;
        }
        let g0 = spec[0];
        // Antiderivative series: coef_j = G_j / (i n_j), zero at n = 0.
        let mut coef = vec![cx(0.0, 0.0); m1];
        for j in 1..m1 {
            let n = fft_freq(j, m1) as f64;
            coef[j] = spec[j] / cx(0.0, n);
        }
        let mut h_out = coef.clone();
        ifft(&mut h_out);
        for h in h_out.iter_mut() {
            *h = *h * m1 as f64 + a_const;
        }
        let mut idx = 0;
        for h in &h_out {
            out[idx] = h.norm() - 1.0;
            idx += 1;
        }
        out[idx] = g0.re;
        out[idx + 1] = g0.im;
        idx += 2;
        // Winding: the outer trace must advance monotonically and close
        // after exactly one turn.
        let mut wind_sum = 0.0;
        for (h, gj) in h_out.iter().zip(&g) {
            let wind = (h.conj() * gj).im / h.norm_sqr();
            out[idx] = wind.min(0.0);
            idx += 1;
            wind_sum += wind;
        }
        out[idx] = wind_sum / m1 as f64 - 1.0;
        idx += 1;
        // Straightness on the inner arcs at Chebyshev-interior nodes.
        for k in 0..self.m {
            let a = thetas[k];
            let b = if k + 1 < self.m { thetas[k + 1] } else { thetas[0] + TAU };
            let nk = self.nstr[k];
            for i in 1..=nk {
                let xs = 0.5 * (a + b)
                    + 0.5 * (b - a) * libm::cos(PI * (2 * i - 1) as f64 / (2 * nk) as f64);
                let zi = Complex64::from_polar(q, xs);
                let tau = log_hprime(zi, &p).exp() * cx(0.0, 1.0) * zi;
                let d = (tau * Complex64::from_polar(1.0, -self.side_dirs[k])).arg();
                out[idx] = d;
                idx += 1;
            }
        }
        // Corner positions: anchor on the outer trace at the prevertex
        // angle, then integrate h' radially inward with the singular factor
        // handled by Gauss-Jacobi.
        for k in 0..self.m {
            let tt = thetas[k];
            let mut h_tt = a_const;
            let e1 = Complex64::from_polar(1.0, tt);
            // Horner-free trig evaluation: iterate powers of e^{i tt}.
            let mut pows = vec![cx(1.0, 0.0); m1];
            for j in 1..m1 {
                pows[j] = pows[j - 1] * e1;
            }
            for j in 1..m1 {
                let n = fft_freq(j, m1);
                let ph = if n >= 0 { pows[n as usize] } else { pows[(-n) as usize].conj() };
                h_tt += coef[j] * ph;
            }
            let bk = self.betas[k];
            let (xi, wi) = &self.jac[k];
            let scale = libm::pow(0.5 * (1.0 - q), 1.0 + bk);
            let mut integral = cx(0.0, 0.0);
            for (&x_node, &w_node) in xi.iter().zip(wi) {
                let rho = 0.5 * (1.0 - q) * x_node + 0.5 * (1.0 + q);
                let zr = Complex64::from_polar(rho, tt);
                let mut lh = log_hprime(zr, &p);
                // Strip the singular factor (1 - a_k/z) = (rho - q)/rho on
                // this ray; the rho^{-beta} part stays in the smooth factor.
                lh -= cx(libm::log((rho - q) / rho), 0.0) * bk;
                let val = lh.exp() * e1 * libm::pow(rho, -bk);
                integral += val * w_node;
            }
            integral *= scale;
            let hk = h_tt - integral;
            out[idx] = hk.re - self.corners[k].re;
            out[idx + 1] = hk.im - self.corners[k].im;
            idx += 2;
        }
        debug_assert_eq!(idx, out.len());
        // Replace any non-finite entries; the minimizer treats such trial
        // points as rejected.
        for o in out.iter_mut() {
            if !o.is_finite() {
                *o = 1e3;
            }
        }
    }
}

/// Straightness collocation counts: resolve Laurent frequencies up to `N`
/// on every arc (Nyquist with margin), with a floor for short arcs.
fn arc_node_counts(gaps: &[f64], n_laurent: usize) -> Vec<usize> {
    gaps.iter()
        .map(|&g| {
            let nyq = libm::ceil(1.5 * (2 * n_laurent) as f64 * g / TAU) + 4.0;
            (nyq as usize).max(12)
        })
        .collect()
}

/// Coarse finite-difference warm start in unit coordinates: the grid
/// capacity gives `q0` from the modulus and the initial prevertex gaps from
/// the per-side flux split.
fn fd_init(
    tree_unit: &PlanarTree,
    walk: &BoundaryWalk,
) -> Result<(f64, Vec<f64>), AnnulusError> {
    let n = 161usize;
    let grid = solve_capacity_grid(1.0, n, |p, h| {
        crate::geom::tree_distance(tree_unit, p) <= 0.5 * h + 1e-12
    })
    .map_err(|_| AnnulusError::DegenerateTree)?;
    let m = walk.len();
    // (edge, geometric side) -> walk side. Probe points on the left of the
    // directed edge a->b belong to the walk side that traverses b->a (the
    // domain lies on the right of the walk).
    let mut flux = vec![0.0f64; m];
    let mut total = 0.0f64;
    let neighbor_offsets: [(isize, isize); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
    for iy in 0..n {
        for ix in 0..n {
            if !grid.is_inner(ix, iy) {
                continue;
            }
            for &(dx, dy) in &neighbor_offsets {
                let (jx, jy) = (ix as isize + dx, iy as isize + dy);
                if jx < 0 || jy < 0 || jx >= n as isize || jy >= n as isize {
                    continue;
                }
                let (jx, jy) = (jx as usize, jy as usize);
                if !grid.is_free(jx, jy) {
                    continue;
                }
                let f = grid.u[jy * n + jx];
                let z = grid.node(jx, jy);
                // Nearest tree edge to the probe node and which side of it.
                let mut best = (0usize, f64::INFINITY);
                for (ei, &(i, j)) in tree_unit.edges.iter().enumerate() {
                    let d = crate::geom::segment_distance(
                        z,
                        tree_unit.vertices[i],
                        tree_unit.vertices[j],
                    );
                    if d < best.1 {
                        best = (ei, d);
                    }
                }
                let (i, j) = tree_unit.edges[best.0];
                let (a, b) = (tree_unit.vertices[i], tree_unit.vertices[j]);
                let cross = ((b - a).conj() * (z - a)).im;
                let want_forward = cross < 0.0;
                for (k, s) in walk.sides.iter().enumerate() {
                    if s.edge == best.0 && s.forward == want_forward {
                        flux[k] += f;
                        break;
                    }
                }
                total += f;
            }
        }
    }
    if !(total > 0.0) {
        return Err(AnnulusError::DegenerateTree);
    }
    let q0 = libm::exp(-TAU / total);
    let mut gaps: Vec<f64> = flux.iter().map(|&f| (f / total).max(1e-3)).collect();
    let gsum: f64 = gaps.iter().sum();
    for g in gaps.iter_mut() {
        *g *= TAU / gsum;
    }
    Ok((q0, gaps))
}

/// Solves the parameter problem for `tree` (radius-2 world) to residual
/// level `tol`.
pub fn solve_tree_complement(tree: &PlanarTree, tol: f64) -> Result<AnnulusTreeMap, AnnulusError> {
    solve_tree_complement_seeded(tree, tol, None)
}

/// As `solve_tree_complement`, but optionally seeded with the solution of a
/// nearby tree (same walk combinatorics), which skips the warm-start stage
/// and most of the iteration.
pub fn solve_tree_complement_seeded(
    tree: &PlanarTree,
    tol: f64,
    seed: Option<&AnnulusTreeMap>,
) -> Result<AnnulusTreeMap, AnnulusError> {
    validate_tree(tree, GEOM_TOL).map_err(|_| AnnulusError::DegenerateTree)?;
    let config = SolverConfig::default();
    let tree_unit = PlanarTree {
        vertices: tree.vertices.iter().map(|v| v * 0.5).collect(),
        edges: tree.edges.clone(),
    };
    // Unit-coordinate walk drives the solve; the radius-2 walk is what the
    // public accessors report. Both start at the same leaf, so side and
    // corner indices agree.
    let walk = boundary_walk(&tree_unit);
    let walk_full = boundary_walk(tree);
    let m = walk.len();
    let corners: Vec<Complex64> = walk.corners.iter().map(|c| c.point).collect();
    let betas: Vec<f64> = walk.corners.iter().map(|c| c.beta).collect();
    let side_dirs: Vec<f64> = walk.sides.iter().map(|s| s.direction).collect();
    let side_lens: Vec<f64> = walk.sides.iter().map(|s| s.length).collect();

    let seed_params = match seed {
        Some(prev) if prev.thetas.len() == m => {
            let mut gaps = Vec::with_capacity(m);
            for k in 0..m {
                let next = if k + 1 < m { prev.thetas[k + 1] } else { prev.thetas[0] + TAU };
                gaps.push(next - prev.thetas[k]);
            }
            Some((prev.q, gaps, prev.log_c, prev.a_const, prev.coeffs.clone()))
        }
        _ => None,
    };
    let (q0, gaps0) = match &seed_params {
        Some((q, gaps, _, _, _)) => (*q, gaps.clone()),
        None => fd_init(&tree_unit, &walk)?,
    };

    let n_laurent = config.laurent_order;
    let nstr = arc_node_counts(&gaps0, n_laurent);
    let jac: Vec<(Vec<f64>, Vec<f64>)> = betas
        .iter()
        .map(|&b| gauss_jacobi(config.corner_nodes, b))
        .collect();
    let problem = ParamProblem {
        m,
        n_laurent,
        m1: config.outer_grid,
        corners: corners.clone(),
        betas: betas.clone(),
        side_dirs: side_dirs.clone(),
        nstr,
        jac,
    };

    let mut thetas0 = Vec::with_capacity(m);
    thetas0.push(0.0);
    let mut acc = 0.0;
    for k in 0..m - 1 {
        acc += gaps0[k];
        thetas0.push(acc);
    }

    let x0 = match &seed_params {
        Some((q, _, log_c, a_const, coeffs)) => {
            problem.pack(*q, &thetas0, *log_c, *a_const, coeffs)
        }
        None => {
            // Alignment seed: with theta_1 pinned at zero the image rotation
            // is carried by arg C; estimate it from the side directions, the
            // magnitude from the perimeter ratio, and the offset A from one
            // corner probe.
            let wm0 = product_series_weights(q0);
            let zero_coeffs: Vec<Complex64> = Vec::new();
            let p0 = DerivParams {
                q: q0,
                thetas: &thetas0,
                betas: &betas,
                log_c: cx(0.0, 0.0),
                coeffs: &zero_coeffs,
                wm: &wm0,
            };
            let mut phase_acc = cx(0.0, 0.0);
            for k in 0..m {
                let a = thetas0[k];
                let b = if k + 1 < m { thetas0[k + 1] } else { TAU };
                let mid = 0.5 * (a + b);
                let zi = Complex64::from_polar(q0, mid);
                let tau = log_hprime(zi, &p0).exp() * cx(0.0, 1.0) * zi;
                phase_acc += Complex64::from_polar(side_lens[k], side_dirs[k] - tau.arg());
            }
            let phase = phase_acc.arg();
            let grid_n = 512usize;
            let mut per_formula = 0.0;
            for j in 0..grid_n {
                let t = TAU * (j as f64 + 0.5) / grid_n as f64;
                let z = Complex64::from_polar(q0, t);
                per_formula += log_hprime(z, &p0).exp().norm() * q0;
            }
            per_formula *= TAU / grid_n as f64;
            let total_len: f64 = side_lens.iter().sum();
            let log_c0 = cx(libm::log(total_len / per_formula), phase);
            let coeffs0 = vec![cx(0.0, 0.0); 2 * n_laurent];
            let mut x0 = problem.pack(q0, &thetas0, log_c0, cx(0.0, 0.0), &coeffs0);
            // Offset A from the first corner's probe residual.
            let mut probe = vec![0.0f64; problem.residual_count()];
            problem.residuals(&x0, &mut probe);
            let ic = problem.corner_residual_offset();
            x0[m + 2] = -probe[ic];
            x0[m + 3] = -probe[ic + 1];
            x0
        }
    };

    // Phase 1 (cold starts only): geometry parameters with the correction
    // frozen at zero, to land in the right basin cheaply.
    let geo_len = m + 4;
    let x1 = if seed_params.is_none() {
        let tail = x0[geo_len..].to_vec();
        let opts1 = LeastSquaresOptions {
            max_iterations: 80,
            residual_target: 1e-9,
            central_switch: 0.0,
            ..LeastSquaresOptions::default()
        };
        let res1 = solve_least_squares(problem.residual_count(), &x0[..geo_len], &opts1, |y, out| {
            let mut full = Vec::with_capacity(y.len() + tail.len());
            full.extend_from_slice(y);
            full.extend_from_slice(&tail);
            problem.residuals(&full, out);
        });
        let mut x1 = res1.x;
        x1.extend_from_slice(&tail);
        x1
    } else {
        x0
    };

    // Phase 2: everything.
    let opts2 = LeastSquaresOptions {
        max_iterations: 160,
        residual_target: (tol / 3.0).max(3e-12),
        central_switch: 3e-7,
        ..LeastSquaresOptions::default()
    };
    let res = solve_least_squares(problem.residual_count(), &x1, &opts2, |y, out| {
        problem.residuals(y, out)
    });
    if res.residual_inf > tol {
        return Err(AnnulusError::NoConvergence);
    }
    let (q, thetas, log_c, a_const, coeffs, _) =
        problem.unpack(&res.x).ok_or(AnnulusError::NoConvergence)?;

    build_map(
        tree.clone(),
        tree_unit,
        walk_full,
        corners,
        betas,
        side_dirs,
        config,
        q,
        thetas,
        log_c,
        a_const,
        coeffs,
        res.residual_inf,
    )
}

#[allow(clippy::too_many_arguments)]
fn build_map(
    tree: PlanarTree,
    tree_unit: PlanarTree,
    walk: BoundaryWalk,
    corners_unit: Vec<Complex64>,
    betas: Vec<f64>,
    side_dirs: Vec<f64>,
    config: SolverConfig,
    q: f64,
    thetas: Vec<f64>,
    log_c: Complex64,
    a_const: Complex64,
    coeffs: Vec<Complex64>,
    residual_inf: f64,
) -> Result<AnnulusTreeMap, AnnulusError> {
    let mut map = AnnulusTreeMap {
        tree,
        r: 2.0 * q,
        outer_prevertex_gauge: 0.0,
        inner_prevertices: Vec::new(),
        sc_constant: log_c.exp(),
        truncation_level: config.laurent_order,
        config,
        residual_inf,
        q,
        thetas,
        betas,
        side_dirs,
        log_c,
        a_const,
        coeffs,
        walk,
        corners_unit,
        rings: Vec::new(),
        sliver_rho: 0.0,
        arc_tables: Vec::new(),
        tree_unit,
        wm: Vec::new(),
        eval_jac: Vec::new(),
        seed_grid: Vec::new(),
    };
    map.finish_construction()?;
    Ok(map)
}

impl AnnulusTreeMap {
    fn deriv_params(&self) -> DerivParams<'_> {
        DerivParams {
            q: self.q,
            thetas: &self.thetas,
            betas: &self.betas,
            log_c: self.log_c,
            coeffs: &self.coeffs,
            wm: &self.wm,
        }
    }

    /// Unit-coordinate derivative `h'`.
    fn hprime_unit(&self, z: Complex64) -> Complex64 {
        log_hprime(z, &self.deriv_params()).exp()
    }

    /// Builds the Laurent series of `h`, the gauge rotation, the public
    /// prevertex angles, the trace-inversion tables and the inversion seed
    /// samples.
    fn finish_construction(&mut self) -> Result<(), AnnulusError> {
        self.wm = product_series_weights(self.q);
        self.eval_jac = self
            .betas
            .iter()
            .map(|&b| gauss_jacobi(self.config.eval_nodes, b))
            .collect();
        // Evaluation ladder. Coefficients of h' measured on the circle of
        // radius rc decay like (q/rc)^k until they hit the FFT roundoff
        // floor near k* = ln(1e-16)/ln(q/rc); truncating there leaves a
        // relative tail of (q/rho)^k*, which stays below ~3e-14 for
        // rho >= q (rc/q)^0.85. Marching rung radii by that rule covers the
        // annulus down to a thin sliver above the inner circle.
        let q = self.q;
        let mut ladder_radii = vec![1.0f64];
        let mut s = libm::log(1.0 / q);
        for _ in 0..24 {
            s *= 0.85;
            if s < libm::log(1.1) {
                break;
            }
            ladder_radii.push(q * libm::exp(s));
        }
        let anchor_angle = 0.37f64;
        let mut rings: Vec<RingSeries> = Vec::with_capacity(ladder_radii.len());
        for (c, &rc) in ladder_radii.iter().enumerate() {
            let k_star = libm::ceil(36.9 / libm::log(rc / q)) as usize;
            let k_cut = k_star.clamp(64, 2048);
            let mut mc = 256usize;
            while mc < 4 * k_cut && mc < 8192 {
                mc *= 2;
            }
            let mut g = vec![cx(0.0, 0.0); mc];
            {
                let p = self.deriv_params();
                for (j, gj) in g.iter_mut().enumerate() {
                    let t = TAU * j as f64 / mc as f64;
                    let z = Complex64::from_polar(rc, t);
                    *gj = log_hprime(z, &p).exp() * cx(0.0, 1.0) * z;
                }
            }
            fft(&mut g);
            let scale = 1.0 / mc as f64;
            let mut coef = vec![cx(0.0, 0.0); mc];
            for j in 1..mc {
                let n = fft_freq(j, mc) as f64;
                coef[j] = g[j] * scale / cx(0.0, n);
            }
            let mut ring = RingSeries { radius: rc, a0: cx(0.0, 0.0), coef, k_cut };
            let anchor_pt = Complex64::from_polar(rc, anchor_angle);
            ring.a0 = if c == 0 {
                self.a_const
            } else {
                // Chain the constant through the previous rung, whose
                // validity extends down to this radius.
                rings[c - 1].eval(anchor_pt) - ring.eval(anchor_pt)
            };
            rings.push(ring);
        }
        self.sliver_rho = *ladder_radii.last().unwrap();
        self.rings = rings;

        // Gauge: find t* with h_outer(t*) = 1 by Newton on arg h.
        let scan = 512usize;
        let mut best = (0.0f64, f64::INFINITY);
        for j in 0..scan {
            let t = TAU * j as f64 / scan as f64;
            let h = self.outer_trace_unit(t);
            let d = (h - cx(1.0, 0.0)).norm();
            if d < best.1 {
                best = (t, d);
            }
        }
        let mut t_star = best.0;
        for _ in 0..60 {
            let h = self.outer_trace_unit(t_star);
            let z = Complex64::from_polar(1.0, t_star);
            let dh = self.hprime_unit(z) * cx(0.0, 1.0) * z;
            let wind = (h.conj() * dh).im / h.norm_sqr();
            let err = h.arg();
            if libm::fabs(err) < 1e-14 {
                break;
            }
            t_star -= err / wind;
        }
        self.outer_prevertex_gauge = wrap_angle(t_star);
        self.inner_prevertices = self
            .thetas
            .iter()
            .map(|&th| wrap_angle(th - self.outer_prevertex_gauge))
            .collect();

        // Monotone per-side tables of |h - corner| against the inner angle,
        // used to seed trace inversion.
        let m = self.thetas.len();
        let mut tables = Vec::with_capacity(m);
        for k in 0..m {
            let a = self.thetas[k];
            let b = if k + 1 < m { self.thetas[k + 1] } else { self.thetas[0] + TAU };
            let nk = 48usize;
            let mut ts = Vec::with_capacity(nk + 2);
            let mut dist = Vec::with_capacity(nk + 2);
            ts.push(a);
            dist.push(0.0);
            for i in 1..=nk {
                // Cluster toward both endpoints (cosine spacing).
                let s = 0.5 * (1.0 - libm::cos(PI * i as f64 / (nk + 1) as f64));
                let t = a + (b - a) * s;
                let h = self.inner_point_unit(k, t);
                ts.push(t);
                dist.push((h - self.corners_unit[k]).norm());
            }
            ts.push(b);
            let next_corner = self.corners_unit[(k + 1) % m];
            dist.push((next_corner - self.corners_unit[k]).norm());
            tables.push(ArcTable { ts, dist });
        }
        self.arc_tables = tables;

        // Inversion seeds: ladder evaluations on a small polar grid
        // spanning the annulus above the sliver.
        let radii = 12usize;
        let angles = 48usize;
        let r_lo = self.sliver_rho.min(0.98);
        let mut seeds = Vec::with_capacity(radii * angles);
        for i in 0..radii {
            let rho = r_lo + (1.0 - r_lo) * i as f64 / (radii - 1) as f64;
            let rho = rho.min(1.0 - 1e-9);
            for j in 0..angles {
                let t = TAU * (j as f64 + 0.5) / angles as f64;
                let zeta = Complex64::from_polar(rho, t);
                seeds.push((zeta, self.ring_eval(zeta)));
            }
        }
        self.seed_grid = seeds;
        Ok(())
    }

    /// Ladder evaluation of `h` at `zeta`, for `|zeta| >= sliver_rho`.
    fn ring_eval(&self, zeta: Complex64) -> Complex64 {
        let rho = zeta.norm();
        let last = self.rings.len() - 1;
        let mut c = 0;
        while c < last && self.rings[c + 1].radius > rho {
            c += 1;
        }
        self.rings[c].eval(zeta)
    }

    /// Outer boundary value `h(e^{it})` in unit coordinates (internal
    /// angle).
    fn outer_trace_unit(&self, t: f64) -> Complex64 {
        self.rings[0].eval(Complex64::from_polar(1.0, t))
    }

    /// Boundary value `h(q e^{it})` on inner-arc side `k` at internal angle
    /// `t` in `(theta_k, theta_{k+1})`, by the corner-anchored singular
    /// quadrature along the inner circle.
    fn inner_point_unit(&self, k: usize, t: f64) -> Complex64 {
        let m = self.thetas.len();
        let a = self.thetas[k];
        let b = if k + 1 < m { self.thetas[k + 1] } else { self.thetas[0] + TAU };
        debug_assert!(t >= a - 1e-12 && t <= b + 1e-12);
        // Integrate from the nearer corner so the far singularity stays at
        // a comfortable distance.
        if t - a <= b - t {
            self.corners_unit[k] + self.inner_arc_integral(k, a, t, false)
        } else {
            let next = self.corners_unit[(k + 1) % m];
            next - self.inner_arc_integral((k + 1) % m, b, t, true)
        }
    }

    /// Integral of `h'(q e^{is}) i q e^{is} ds` from the corner prevertex
    /// angle `t_corner` (of corner `corner_idx`) to `t`, where the integrand
    /// vanishes like `|s - t_corner|^{beta}`. For `reversed`, `t_corner`
    /// lies above `t` and the result is the integral from `t` to
    /// `t_corner`.
    fn inner_arc_integral(&self, corner_idx: usize, t_corner: f64, t: f64, reversed: bool) -> Complex64 {
        let q = self.q;
        let p = self.deriv_params();
        let bk = self.betas[corner_idx];
        let len = libm::fabs(t - t_corner);
        if len == 0.0 {
            return cx(0.0, 0.0);
        }
        // Substituting s = t_corner + sgn * delta turns both orientations
        // into an integral in delta over [0, len] with positive measure, so
        // no direction sign appears outside the argument.
        let sgn = if reversed { -1.0 } else { 1.0 };
        // Distance (in angle) from the corner to the nearest other
        // prevertex along the sweep direction and behind it.
        let m = self.thetas.len();
        let gap_ahead = {
            let a = self.thetas[corner_idx];
            let mut g = f64::INFINITY;
            for j in 0..m {
                if j == corner_idx {
                    continue;
                }
                let mut d = wrap_angle(sgn * (self.thetas[j] - a));
                if d == 0.0 {
                    d = TAU;
                }
                g = g.min(d);
            }
            g
        };
        // First panel: Gauss-Jacobi against the |s - t_corner|^beta factor,
        // length limited by the nearest other singularity.
        let first_len = len.min(0.5 * gap_ahead);
        let (xi, wi) = &self.eval_jac[corner_idx];
        let scale = libm::pow(0.5 * first_len, 1.0 + bk);
        let mut acc = cx(0.0, 0.0);
        for (&x_node, &w_node) in xi.iter().zip(wi.iter()) {
            let delta = 0.5 * first_len * (x_node + 1.0);
            let s = t_corner + sgn * delta;
            let z = Complex64::from_polar(q, s);
            // h' vanishes like delta^beta at the corner; delta^{-beta} h'
            // is smooth and the weight carries the delta^beta factor.
            // The corner's own factor is applied in closed form: with
            // a/z = exp(-i sgn delta), (1 - a/z) / delta equals
            // (2 sin(delta/2) / delta) exp(i sgn (pi - delta) / 2), which
            // evaluates cleanly even when delta is below the ulp of the
            // angle and z lands exactly on the prevertex.
            let mut lh = log_hprime_skip(z, &p, corner_idx);
            let half = 0.5 * delta;
            let ratio = if half > 0.0 { 2.0 * libm::sin(half) / delta } else { 1.0 };
            lh += cx(bk * libm::log(ratio), sgn * bk * (0.5 * PI - half));
            acc += lh.exp() * cx(0.0, 1.0) * z * w_node;
        }
        acc *= scale;
        // Remaining stretch: plain Gauss-Legendre panels that grow
        // geometrically away from both singular ends.
        if first_len < len {
            let (xl, wl) = gauss_legendre(24);
            let mut pos = first_len;
            while pos < len - 1e-15 {
                let dist_behind = pos;
                let dist_ahead = gap_ahead - pos;
                let panel = (len - pos).min(0.9 * dist_behind.min(dist_ahead).max(1e-15));
                let (lo, hi) = (pos, pos + panel);
                for (&x_node, &w_node) in xl.iter().zip(&wl) {
                    let delta = 0.5 * (hi - lo) * x_node + 0.5 * (hi + lo);
                    let s = t_corner + sgn * delta;
                    let z = Complex64::from_polar(q, s);
                    let val = log_hprime(z, &p).exp() * cx(0.0, 1.0) * z;
                    acc += val * w_node * 0.5 * (hi - lo);
                }
                pos = hi;
            }
        }
        acc
    }

    /// Walk side whose inner arc contains the internal angle `theta`
    /// (prevertex angles delimit; ties resolve to the side starting there).
    fn side_of_internal(&self, theta: f64) -> usize {
        let t = wrap_angle(theta);
        let m = self.thetas.len();
        let mut k = 0;
        for (j, &th) in self.thetas.iter().enumerate() {
            if th <= t + 1e-15 {
                k = j;
            }
        }
        debug_assert!(k < m);
        k
    }

    /// `h` at a unit-coordinate point of the closed annulus.
    fn eval_unit(&self, zeta: Complex64) -> Result<Complex64, AnnulusError> {
        let rho = zeta.norm();
        if rho > 1.0 + 1e-9 || rho < self.q - 1e-9 {
            return Err(AnnulusError::OutsideDomain);
        }
        if rho <= self.q + 1e-12 {
            let k = self.side_of_internal(zeta.arg());
            let m = self.thetas.len();
            let a = self.thetas[k];
            let t = wrap_angle(zeta.arg()).max(a);
            let b = if k + 1 < m { self.thetas[k + 1] } else { self.thetas[0] + TAU };
            return Ok(self.inner_point_unit(k, t.min(b)));
        }
        if rho >= self.sliver_rho {
            let clamped = if rho > 1.0 { zeta / rho } else { zeta };
            return Ok(self.ring_eval(clamped));
        }
        // Sliver below the deepest rung: anchor there and integrate h'
        // radially inward, panels graded by the distance to the
        // prevertices.
        let theta = zeta.arg();
        let dir = Complex64::from_polar(1.0, theta);
        let anchor_rho = self.sliver_rho;
        let mut acc = self.ring_eval(dir * anchor_rho);
        let (xl, wl) = gauss_legendre(24);
        let mut hi = anchor_rho;
        while hi > rho + 1e-15 {
            let mut d = f64::INFINITY;
            for &th in &self.thetas {
                d = d.min((dir * hi - Complex64::from_polar(self.q, th)).norm());
            }
            let panel = (hi - rho).min((0.9 * d).max(1e-9));
            let lo = hi - panel;
            let mut seg = cx(0.0, 0.0);
            for (&x_node, &w_node) in xl.iter().zip(&wl) {
                let s = 0.5 * (hi - lo) * x_node + 0.5 * (hi + lo);
                seg += self.hprime_unit(dir * s) * w_node;
            }
            acc -= seg * dir * (0.5 * (hi - lo));
            hi = lo;
        }
        Ok(acc)
    }

    /// Evaluates the map at `z` in the closed annulus `A(r, 2)`; inner
    /// circle points land on the tree, outer circle points on the radius-2
    /// circle.
    pub fn eval(&self, z: Complex64) -> Result<Complex64, AnnulusError> {
        let zeta = 0.5 * z * Complex64::from_polar(1.0, self.outer_prevertex_gauge);
        Ok(2.0 * self.eval_unit(zeta)?)
    }

    /// Derivative `h'(z)` of the radius-2 map at an interior point.
    pub fn eval_derivative(&self, z: Complex64) -> Result<Complex64, AnnulusError> {
        let gauge = Complex64::from_polar(1.0, self.outer_prevertex_gauge);
        let zeta = 0.5 * z * gauge;
        let rho = zeta.norm();
        if rho > 1.0 + 1e-9 || rho < self.q * (1.0 + 1e-12) {
            return Err(AnnulusError::OutsideDomain);
        }
        // d/dz [2 h_u(gauge z / 2)] = h_u'(zeta) * gauge.
        Ok(self.hprime_unit(zeta) * gauge)
    }

    /// Prime-end trace on the inner circle: the tree point reached at
    /// public angle `t`, together with the walk side it lies on.
    pub fn inner_trace(&self, t: f64) -> (Point2, usize) {
        let theta = wrap_angle(t + self.outer_prevertex_gauge);
        let k = self.side_of_internal(theta);
        let m = self.thetas.len();
        let a = self.thetas[k];
        let ti = theta.max(a);
        let b = if k + 1 < m { self.thetas[k + 1] } else { self.thetas[0] + TAU };
        (2.0 * self.inner_point_unit(k, ti.min(b)), k)
    }

    /// Inverse of the trace restricted to walk side `k`: the public inner
    /// angle whose prime end is `p` (a point on that side of the tree).
    pub fn invert_inner_trace(&self, p: Point2, k: usize) -> Result<f64, AnnulusError> {
        let m = self.thetas.len();
        if k >= m {
            return Err(AnnulusError::SideMismatch);
        }
        let pu = 0.5 * p;
        let side = &self.walk.sides[k];
        let (sa, sb) = (0.5 * side.from, 0.5 * side.to);
        let d_side = crate::geom::segment_distance(pu, sa, sb);
        if d_side > 1e-7 {
            if crate::geom::tree_distance(&self.tree_unit, pu) > 1e-7 {
                return Err(AnnulusError::NotOnTree);
            }
            return Err(AnnulusError::SideMismatch);
        }
        let a = self.thetas[k];
        let b = if k + 1 < m { self.thetas[k + 1] } else { self.thetas[0] + TAU };
        let table = &self.arc_tables[k];
        let side_len = (sb - sa).norm();
        let target = (pu - sa).norm().min(side_len);
        // Seed from the monotone table, then safeguarded secant iteration.
        let mut lo = a;
        let mut hi = b;
        let mut flo = -target;
        let mut fhi = side_len - target;
        for w in table.ts.windows(2).zip(table.dist.windows(2)) {
            let (tw, dw) = w;
            if dw[1] >= target && dw[0] <= target {
                lo = tw[0];
                hi = tw[1];
                flo = dw[0] - target;
                fhi = dw[1] - target;
                break;
            }
        }
        if flo >= 0.0 {
            return Ok(wrap_angle(a - self.outer_prevertex_gauge));
        }
        if fhi <= 0.0 {
            return Ok(wrap_angle(b - self.outer_prevertex_gauge));
        }
        let corner = self.corners_unit[k];
        let mut t = lo + (hi - lo) * (-flo) / (fhi - flo);
        for _ in 0..80 {
            let f = (self.inner_point_unit(k, t) - corner).norm() - target;
            if libm::fabs(f) < 1e-12 {
                break;
            }
            if f > 0.0 {
                hi = t;
                fhi = f;
            } else {
                lo = t;
                flo = f;
            }
            let mut t_next = lo + (hi - lo) * (-flo) / (fhi - flo);
            if !(t_next > lo && t_next < hi) {
                t_next = 0.5 * (lo + hi);
            }
            if hi - lo < 1e-14 {
                t = 0.5 * (lo + hi);
                break;
            }
            t = t_next;
        }
        Ok(wrap_angle(t - self.outer_prevertex_gauge))
    }

    /// Inverse map: the annulus point sent to `w` (an interior point of the
    /// slit disk), by seeded Newton iteration.
    pub fn invert(&self, w: Complex64) -> Result<Complex64, AnnulusError> {
        let wu = 0.5 * w;
        if wu.norm() > 1.0 + 1e-9 {
            return Err(AnnulusError::OutsideDomain);
        }
        let mut best = (cx(0.0, 0.0), f64::INFINITY);
        for &(zeta, h) in &self.seed_grid {
            let d = (h - wu).norm();
            if d < best.1 {
                best = (zeta, d);
            }
        }
        let mut zeta = best.0;
        let mut best_pt = (zeta, best.1);
        for _ in 0..60 {
            let h = match self.eval_unit(zeta) {
                Ok(h) if h.is_finite() => h,
                _ => break,
            };
            let err = (h - wu).norm();
            if err < best_pt.1 {
                best_pt = (zeta, err);
            }
            if err < 1e-12 {
                break;
            }
            let dh = self.hprime_unit(zeta);
            if !dh.is_finite() || dh.norm() == 0.0 {
                break;
            }
            let mut step = (h - wu) / dh;
            // Keep the iterate inside the closed annulus.
            let mut next = zeta - step;
            let mut tries = 0;
            while !next.is_finite() || next.norm() > 1.0 || next.norm() < self.q * (1.0 + 1e-13) {
                step *= 0.5;
                next = zeta - step;
                tries += 1;
                if tries > 50 {
                    let rho = next.norm();
                    if !rho.is_finite() || rho == 0.0 {
                        next = zeta;
                    } else {
                        next = next / rho * rho.clamp(self.q * (1.0 + 1e-12), 1.0);
                    }
                    break;
                }
            }
            if (next - zeta).norm() < 1e-16 {
                break;
            }
            zeta = next;
        }
        if best_pt.1 > 1e-9 {
            return Err(AnnulusError::NoConvergence);
        }
        Ok(2.0 * best_pt.0 * Complex64::from_polar(1.0, -self.outer_prevertex_gauge))
    }

    /// The boundary walk of the tree (radius-2 world) this map realizes.
    pub fn walk(&self) -> &BoundaryWalk {
        &self.walk
    }

    /// Number of walk sides / corners.
    pub fn side_count(&self) -> usize {
        self.thetas.len()
    }

    /// Public inner angle of prevertex `k` (image of walk corner `k`).
    pub fn prevertex_angle(&self, k: usize) -> f64 {
        self.inner_prevertices[k]
    }

    /// Recomputes all residual families on denser grids with independent
    /// quadrature orders.
    pub fn verify_residuals(&self) -> MapResiduals {
        let p = self.deriv_params();
        let m = self.thetas.len();
        // Roundness and winding on an offset grid finer than any used in
        // the solve.
        let n_check = 1024usize;
        let mut roundness = 0.0f64;
        let mut winding = 0.0f64;
        let mut wind_total = 0.0f64;
        for j in 0..n_check {
            let t = TAU * (j as f64 + 0.37) / n_check as f64;
            let z = Complex64::from_polar(1.0, t);
            let h = self.rings[0].eval(z);
            let g = log_hprime(z, &p).exp() * cx(0.0, 1.0) * z;
            roundness = roundness.max(libm::fabs(h.norm() - 1.0));
            let wind = (h.conj() * g).im / h.norm_sqr();
            winding = winding.max((-wind).max(0.0));
            wind_total += wind;
        }
        winding = winding.max(libm::fabs(wind_total / n_check as f64 - 1.0));
        // Straightness at four times the solver's collocation density.
        let mut straightness = 0.0f64;
        for k in 0..m {
            let a = self.thetas[k];
            let b = if k + 1 < m { self.thetas[k + 1] } else { self.thetas[0] + TAU };
            let nk = 4 * ((b - a) / TAU * (2 * self.truncation_level) as f64 * 1.5 + 16.0) as usize;
            for i in 1..=nk {
                let xs = 0.5 * (a + b)
                    + 0.5 * (b - a) * libm::cos(PI * (2 * i - 1) as f64 / (2 * nk) as f64);
                let zi = Complex64::from_polar(self.q, xs);
                let tau = log_hprime(zi, &p).exp() * cx(0.0, 1.0) * zi;
                let d = (tau * Complex64::from_polar(1.0, -self.side_dirs[k])).arg();
                straightness = straightness.max(libm::fabs(d));
            }
        }
        // Corner positions by the radial quadrature at evaluation order.
        let mut corner_position = 0.0f64;
        let mut side_length = 0.0f64;
        let mut computed = Vec::with_capacity(m);
        for k in 0..m {
            let tt = self.thetas[k];
            let h_tt = self.outer_trace_unit(tt);
            let bk = self.betas[k];
            let (xi, wi) = &self.eval_jac[k];
            let q = self.q;
            let scale = libm::pow(0.5 * (1.0 - q), 1.0 + bk);
            let e1 = Complex64::from_polar(1.0, tt);
            let mut integral = cx(0.0, 0.0);
            for (&x_node, &w_node) in xi.iter().zip(wi.iter()) {
                let rho = 0.5 * (1.0 - q) * x_node + 0.5 * (1.0 + q);
                let zr = Complex64::from_polar(rho, tt);
                let mut lh = log_hprime(zr, &p);
                lh -= cx(libm::log((rho - q) / rho), 0.0) * bk;
                integral += lh.exp() * e1 * libm::pow(rho, -bk) * w_node;
            }
            integral *= scale;
            let hk = h_tt - integral;
            computed.push(hk);
            corner_position = corner_position.max((hk - self.corners_unit[k]).norm());
        }
        for k in 0..m {
            let target = (self.corners_unit[(k + 1) % m] - self.corners_unit[k]).norm();
            let got = (computed[(k + 1) % m] - computed[k]).norm();
            side_length = side_length.max(libm::fabs(got - target));
        }
        MapResiduals { roundness, winding, straightness, corner_position, side_length }
    }
}

/// Residual families of a solved map, recomputed on verification grids.
#[derive(Clone, Copy, Debug)]
pub struct MapResiduals {
    /// Sup of `||h| - 1|` on the outer circle.
    pub roundness: f64,
    /// Worst winding violation on the outer circle (negative advance or
    /// total-turn defect).
    pub winding: f64,
    /// Sup of the angle between inner-arc image tangents and their side
    /// directions.
    pub straightness: f64,
    /// Sup distance of computed corner images from the walk corners.
    pub corner_position: f64,
    /// Sup defect of image side lengths against the walk side lengths.
    pub side_length: f64,
}

impl MapResiduals {
    /// Largest of the residual families.
    pub fn sup(&self) -> f64 {
        self.roundness
            .max(self.winding)
            .max(self.straightness)
            .max(self.corner_position)
            .max(self.side_length)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::segment_modulus_oracle;

    fn segment_tree() -> PlanarTree {
        PlanarTree {
            vertices: vec![Point2::new(-1.0, 0.0), Point2::new(1.0, 0.0)],
            edges: vec![(0, 1)],
        }
    }

    fn tripod_tree() -> PlanarTree {
        let mut vertices = vec![Point2::new(0.0, 0.0)];
        for i in 0..3 {
            let a = TAU * i as f64 / 3.0;
            vertices.push(Point2::new(libm::cos(a), libm::sin(a)));
        }
        PlanarTree { vertices, edges: vec![(0, 1), (0, 2), (0, 3)] }
    }

    #[test]
    fn segment_inner_radius_matches_the_exact_oracle() {
        let tree = segment_tree();
        let map = solve_tree_complement(&tree, 1e-10).unwrap();
        let modulus = segment_modulus_oracle(1.0, 2.0).unwrap();
        let r_exact = 2.0 * libm::exp(-TAU * modulus);
        assert!(
            (map.r - r_exact).abs() < 1e-8,
            "r = {}, exact = {r_exact}, residual = {}",
            map.r,
            map.residual_inf
        );
    }

    #[test]
    fn tripod_solve_converges_to_tolerance() {
        let map = solve_tree_complement(&tripod_tree(), 1e-10).unwrap();
        assert!(map.residual_inf <= 1e-10, "residual {}", map.residual_inf);
        assert!(map.r > 0.0 && map.r < 2.0);
    }

    #[test]
    fn bent_arc_and_star_solve_to_tolerance() {
        let bent = PlanarTree {
            vertices: vec![
                Point2::new(-0.8, 0.0),
                Point2::new(0.0, 0.0),
                Point2::new(0.8 * libm::cos(PI / 3.0), 0.8 * libm::sin(PI / 3.0)),
            ],
            edges: vec![(0, 1), (1, 2)],
        };
        let mut star_vertices = vec![Point2::new(0.0, 0.0)];
        for i in 0..5 {
            let a = TAU * i as f64 / 5.0;
            star_vertices.push(Point2::new(0.9 * libm::cos(a), 0.9 * libm::sin(a)));
        }
        let star = PlanarTree {
            vertices: star_vertices,
            edges: vec![(0, 1), (0, 2), (0, 3), (0, 4), (0, 5)],
        };
        for tree in [bent, star] {
            let map = solve_tree_complement(&tree, 1e-10).unwrap();
            assert!(map.residual_inf <= 1e-10, "residual {}", map.residual_inf);
            let res = map.verify_residuals();
            assert!(res.sup() <= 1e-9, "{res:?}");
        }
    }

    #[test]
    fn warm_start_tracks_a_perturbed_tree() {
        let base = solve_tree_complement(&tripod_tree(), 1e-10).unwrap();
        let mut tree = tripod_tree();
        tree.vertices[1].re += 0.03;
        tree.vertices[2].im -= 0.02;
        let warm = solve_tree_complement_seeded(&tree, 1e-10, Some(&base)).unwrap();
        assert!(warm.residual_inf <= 1e-10, "residual {}", warm.residual_inf);
        assert!((warm.r - base.r).abs() < 0.1);
    }

    #[test]
    fn verification_residuals_stay_at_solver_level() {
        for tree in [segment_tree(), tripod_tree()] {
            let map = solve_tree_complement(&tree, 1e-10).unwrap();
            let res = map.verify_residuals();
            assert!(res.sup() <= 1e-10, "{res:?}");
        }
    }

    #[test]
    fn outer_normalization_fixes_two() {
        let map = solve_tree_complement(&tripod_tree(), 1e-10).unwrap();
        let w = map.eval(cx(2.0, 0.0)).unwrap();
        assert!((w - cx(2.0, 0.0)).norm() < 1e-9, "h(2) = {w}");
    }

    #[test]
    fn ladder_rungs_agree_where_their_validity_overlaps() {
        let map = solve_tree_complement(&tripod_tree(), 1e-10).unwrap();
        assert!(map.rings.len() > 2, "expected a multi-rung ladder");
        for c in 0..map.rings.len() - 1 {
            let rho = map.rings[c + 1].radius;
            for j in 0..16 {
                let t = TAU * (j as f64 + 0.13) / 16.0;
                let zeta = Complex64::from_polar(rho, t);
                let upper = map.rings[c].eval(zeta);
                let lower = map.rings[c + 1].eval(zeta);
                assert!(
                    (upper - lower).norm() < 1e-10,
                    "rung {c} vs {} disagree by {} at t = {t}",
                    c + 1,
                    (upper - lower).norm()
                );
            }
        }
    }

    #[test]
    fn sliver_quadrature_matches_the_deepest_rung_at_its_anchor() {
        let map = solve_tree_complement(&tripod_tree(), 1e-10).unwrap();
        // Points a hair below the deepest rung run through the radial
        // quadrature; its result must join the ladder value continuously
        // (difference bounded by |h'| times the step).
        for j in 0..16 {
            let t = TAU * (j as f64 + 0.41) / 16.0;
            let zeta_hi = Complex64::from_polar(map.sliver_rho, t);
            let zeta_lo = Complex64::from_polar(map.sliver_rho - 1e-9, t);
            let hi = map.eval_unit(zeta_hi).unwrap();
            let lo = map.eval_unit(zeta_lo).unwrap();
            let bound = 1e-9 * map.hprime_unit(zeta_hi).norm() + 1e-11;
            assert!(
                (hi - lo).norm() < 10.0 * bound,
                "sliver jump {} (bound {bound}) at t = {t}",
                (hi - lo).norm()
            );
        }
    }

    #[test]
    fn inverse_round_trips_interior_points() {
        let map = solve_tree_complement(&tripod_tree(), 1e-10).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let rho = map.r + (2.0 - map.r) * (i as f64 + 0.5) / 8.0;
                let t = TAU * (j as f64 + 0.31) / 8.0;
                let z = Complex64::from_polar(rho.min(2.0 - 1e-6), t);
                let w = map.eval(z).unwrap();
                let z2 = map.invert(w).unwrap();
                assert!((z - z2).norm() < 1e-8, "z = {z}, z2 = {z2}");
            }
        }
    }

    #[test]
    fn trace_lands_on_the_tree_and_inverts() {
        let tree = tripod_tree();
        let map = solve_tree_complement(&tree, 1e-10).unwrap();
        for j in 0..40 {
            let t = TAU * (j as f64 + 0.17) / 40.0;
            let (p, k) = map.inner_trace(t);
            assert!(
                crate::geom::tree_distance(&tree, p) < 1e-9,
                "trace point off tree by {}",
                crate::geom::tree_distance(&tree, p)
            );
            let t2 = map.invert_inner_trace(p, k).unwrap();
            let d = crate::num::wrap_signed(t2 - t);
            assert!(d.abs() < 1e-8, "angle mismatch {d}");
        }
    }

    #[test]
    fn prevertex_angles_map_to_walk_corners() {
        let tree = tripod_tree();
        let map = solve_tree_complement(&tree, 1e-10).unwrap();
        let m = map.side_count();
        for k in 0..m {
            let t = map.prevertex_angle(k);
            let (p, _) = map.inner_trace(t + 1e-13);
            let corner = map.walk().corners[k].point;
            assert!((p - corner).norm() < 1e-8, "corner {k}: {p} vs {corner}");
        }
    }
}

