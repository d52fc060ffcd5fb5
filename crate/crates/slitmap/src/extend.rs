//! Canonical extension of tree embeddings to homeomorphisms of the
//! radius-2 disk.
//!
//! Given an embedded tree and an embedding of it onto another tree in the
//! open disk, both slit complements are uniformized by annulus maps. The
//! two inner boundary correspondences are spliced into a circle
//! homeomorphism, extended radially across the annulus, and conjugated back
//! through the uniformizing maps. The result restricts to the given
//! embedding on the tree, depends continuously on it, and can be pinned to
//! the identity on the outer circle by a collar interpolation on the image
//! side.

use alloc::vec;
use alloc::vec::Vec;

use core::f64::consts::TAU;

use num_complex::Complex64;

use crate::annulus::{
    solve_tree_complement, solve_tree_complement_seeded, AnnulusError, AnnulusTreeMap,
};
use crate::geom::{
    boundary_walk, locate_on_tree, tree_distance, validate_tree, GeomError, PlanarTree, Point2,
    GEOM_TOL,
};
use crate::homeo::CircleHomeo;
use crate::num::wrap_angle;

#[inline]
fn cx(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Errors from the extension operators.
#[derive(Clone, Debug, PartialEq)]
pub enum ExtendError {
    /// A radial parameter is outside `(0, 2)`.
    BadRadius,
    /// A modulus parameter is outside its valid range.
    BadRho,
    /// The embedding reverses the cyclic order of the boundary walk, so no
    /// orientation-preserving extension exists.
    OrientationIncompatible,
    /// Prime-end bookkeeping between the two solved maps is inconsistent.
    SideMismatch,
    /// The outer boundary restriction is too far from the identity for the
    /// collar interpolation.
    BoundaryTooFar,
    /// The requested collar reaches the tree.
    CollarHitsTree,
    /// The source or image data is not a valid embedded tree.
    InvalidEmbedding(GeomError),
    /// A constituent conformal solve or inversion failed.
    Solver(AnnulusError),
}

impl From<AnnulusError> for ExtendError {
    fn from(e: AnnulusError) -> Self {
        ExtendError::Solver(e)
    }
}

impl From<GeomError> for ExtendError {
    fn from(e: GeomError) -> Self {
        ExtendError::InvalidEmbedding(e)
    }
}

impl core::fmt::Display for ExtendError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ExtendError::BadRadius => write!(f, "radius outside (0, 2)"),
            ExtendError::BadRho => write!(f, "modulus parameter out of range"),
            ExtendError::OrientationIncompatible => {
                write!(f, "embedding reverses the boundary cyclic order")
            }
            ExtendError::SideMismatch => write!(f, "inconsistent prime-end correspondence"),
            ExtendError::BoundaryTooFar => {
                write!(f, "outer boundary map too far from the identity")
            }
            ExtendError::CollarHitsTree => write!(f, "collar reaches the tree"),
            ExtendError::InvalidEmbedding(e) => write!(f, "invalid embedding: {e}"),
            ExtendError::Solver(e) => write!(f, "solver failure: {e}"),
        }
    }
}

impl core::error::Error for ExtendError {}

/// The radial homeomorphism of `A(1,2)` onto `A(r,2)` that fixes every ray
/// and moves the inner circle to radius `r`.
#[derive(Clone, Copy, Debug)]
pub struct RadialMap {
    r: f64,
}

/// Builds the radial map for inner radius `r` in `(0, 2)`.
pub fn radial_map(r: f64) -> Result<RadialMap, ExtendError> {
    if !(r > 0.0 && r < 2.0) {
        return Err(ExtendError::BadRadius);
    }
    Ok(RadialMap { r })
}

impl RadialMap {
    /// Inner radius.
    pub fn r(&self) -> f64 {
        self.r
    }

    /// Image of `x` in `A(1,2)`.
    pub fn eval(&self, x: Complex64) -> Complex64 {
        let n = x.norm();
        if n < 1e-300 {
            return x;
        }
        x * (((2.0 - self.r) * (n - 1.0) + self.r) / n)
    }

    /// Preimage in `A(1,2)` of `y` in `A(r,2)`.
    pub fn invert(&self, y: Complex64) -> Complex64 {
        let n = y.norm();
        if n < 1e-300 {
            return y;
        }
        y * ((1.0 + (n - self.r) / (2.0 - self.r)) / n)
    }
}

/// A piecewise-affine embedding of a tree onto another tree with the same
/// combinatorics, given by the images of the vertices.
#[derive(Clone, Debug)]
pub struct TreeEmbedding {
    source: PlanarTree,
    images: Vec<Point2>,
    image_tree: PlanarTree,
    orientation_compatible: bool,
}

/// Index of the walk side carrying the directed edge `(edge, forward)`.
fn side_index_map(
    source_walk: &crate::geom::BoundaryWalk,
    image_walk: &crate::geom::BoundaryWalk,
) -> Result<Vec<usize>, ExtendError> {
    let n = source_walk.sides.len();
    if image_walk.sides.len() != n {
        return Err(ExtendError::SideMismatch);
    }
    let mut map = vec![usize::MAX; n];
    for (k, s) in source_walk.sides.iter().enumerate() {
        for (j, t) in image_walk.sides.iter().enumerate() {
            if s.edge == t.edge && s.forward == t.forward {
                map[k] = j;
                break;
            }
        }
        if map[k] == usize::MAX {
            return Err(ExtendError::SideMismatch);
        }
    }
    Ok(map)
}

impl TreeEmbedding {
    /// Builds the embedding sending vertex `j` of `source` to `images[j]`,
    /// extended affinely over each edge.
    ///
    /// The image data must itself be an embedded tree in the open radius-2
    /// disk.
    pub fn new(source: &PlanarTree, images: &[Point2]) -> Result<Self, ExtendError> {
        if images.len() != source.vertices.len() {
            return Err(ExtendError::InvalidEmbedding(GeomError::EmptySet));
        }
        validate_tree(source, GEOM_TOL)?;
        let image_tree = PlanarTree {
            vertices: images.to_vec(),
            edges: source.edges.clone(),
        };
        validate_tree(&image_tree, GEOM_TOL)?;
        let source_walk = boundary_walk(source);
        let image_walk = boundary_walk(&image_tree);
        let side_map = side_index_map(&source_walk, &image_walk)?;
        let n = side_map.len();
        let shift = side_map[0];
        let orientation_compatible =
            (0..n).all(|k| side_map[k] == (shift + k) % n);
        Ok(TreeEmbedding {
            source: source.clone(),
            images: images.to_vec(),
            image_tree,
            orientation_compatible,
        })
    }

    /// The identity embedding of `tree`.
    pub fn identity(tree: &PlanarTree) -> Result<Self, ExtendError> {
        TreeEmbedding::new(tree, &tree.vertices)
    }

    /// The source tree.
    pub fn source(&self) -> &PlanarTree {
        &self.source
    }

    /// Vertex images.
    pub fn images(&self) -> &[Point2] {
        &self.images
    }

    /// The image tree.
    pub fn image_tree(&self) -> &PlanarTree {
        &self.image_tree
    }

    /// True when the embedding preserves the cyclic order of the boundary
    /// walk, so an orientation-preserving ambient extension can exist.
    pub fn orientation_compatible(&self) -> bool {
        self.orientation_compatible
    }

    /// True when source and image coincide bit for bit.
    pub fn is_identity(&self) -> bool {
        self.source
            .vertices
            .iter()
            .zip(&self.images)
            .all(|(a, b)| a == b)
    }

    /// Image of a point `p` on the source tree.
    pub fn eval(&self, p: Point2) -> Result<Point2, ExtendError> {
        let (edge, t, _) = locate_on_tree(&self.source, p, 1e-9)?;
        let (a, b) = self.source.edges[edge];
        Ok(self.images[a] + (self.images[b] - self.images[a]) * t)
    }

    /// Preimage of a point `q` on the image tree.
    pub fn eval_inverse(&self, q: Point2) -> Result<Point2, ExtendError> {
        let (edge, t, _) = locate_on_tree(&self.image_tree, q, 1e-9)?;
        let (a, b) = self.source.edges[edge];
        let va = self.source.vertices[a];
        let vb = self.source.vertices[b];
        Ok(va + (vb - va) * t)
    }
}

/// Inner uniformizing radius together with the composite map
/// `h ∘ φ_r : A(1,2) -> D(2) \ image`.
#[derive(Clone, Debug)]
pub struct PsiPair {
    /// Inner radius of the solved annulus.
    pub r: f64,
    map: AnnulusTreeMap,
    radial: RadialMap,
}

/// Solves the image tree of `f` and packages the composite with the radial
/// map, the continuous invariant attached to an embedding.
pub fn psi_pair(f: &TreeEmbedding, tol: f64) -> Result<PsiPair, ExtendError> {
    let map = solve_tree_complement(f.image_tree(), tol)?;
    pair_from_map(map)
}

fn pair_from_map(map: AnnulusTreeMap) -> Result<PsiPair, ExtendError> {
    let r = map.r;
    Ok(PsiPair {
        r,
        radial: radial_map(r)?,
        map,
    })
}

impl PsiPair {
    /// Value of the composite at `x` in the closed `A(1,2)`.
    pub fn eval(&self, x: Complex64) -> Result<Complex64, ExtendError> {
        Ok(self.map.eval(self.radial.eval(x))?)
    }

    /// The solved annulus map of the image tree.
    pub fn map(&self) -> &AnnulusTreeMap {
        &self.map
    }
}

/// Angular nodes for the inner boundary correspondence: a uniform grid
/// plus geometric refinement toward each prevertex whose corner is a leaf
/// tip, where the correspondence loses its Lipschitz bound.
fn theta_nodes(map: &AnnulusTreeMap) -> Vec<f64> {
    let mut nodes: Vec<f64> = (0..512).map(|j| TAU * j as f64 / 512.0).collect();
    let m = map.side_count();
    for k in 0..m {
        let corner = &map.walk().corners[k];
        nodes.push(wrap_angle(map.prevertex_angle(k)));
        if corner.sector_angle > 5.0 {
            let a = map.prevertex_angle(k);
            let prev = map.prevertex_angle((k + m - 1) % m);
            let next = map.prevertex_angle((k + 1) % m);
            let gap_f = wrap_angle(next - a);
            let gap_b = wrap_angle(a - prev);
            for j in 1..=7 {
                let h = libm::pow(2.0, -(j as f64));
                nodes.push(wrap_angle(a + 0.5 * gap_f * h));
                nodes.push(wrap_angle(a - 0.5 * gap_b * h));
            }
        }
    }
    nodes.sort_unstable_by(|x, y| x.total_cmp(y));
    nodes.dedup_by(|a, b| (*a - *b).abs() < 1e-13);
    nodes
}

fn theta0_from_maps(
    source_map: &AnnulusTreeMap,
    image_map: &AnnulusTreeMap,
    f: &TreeEmbedding,
) -> Result<CircleHomeo, ExtendError> {
    let side_map = side_index_map(source_map.walk(), image_map.walk())?;
    let nodes = theta_nodes(source_map);
    let mut samples = Vec::with_capacity(nodes.len());
    for &t in &nodes {
        let (p, k) = source_map.inner_trace(t);
        let side = &source_map.walk().sides[k];
        let len = side.length.max(1e-300);
        let s = ((p - side.from).norm() / len).clamp(0.0, 1.0);
        let j = side_map[k];
        let img = &image_map.walk().sides[j];
        let q = img.from + (img.to - img.from) * s;
        let t2 = image_map.invert_inner_trace(q, j)?;
        samples.push((t, t2));
        let _ = f;
    }
    CircleHomeo::from_samples(&samples).map_err(|_| ExtendError::SideMismatch)
}

/// The circle homeomorphism splicing the two inner boundary
/// correspondences: it carries the prime-end angle of a tree point to the
/// prime-end angle of its image.
pub fn theta0(f: &TreeEmbedding, tol: f64) -> Result<CircleHomeo, ExtendError> {
    if !f.orientation_compatible() {
        return Err(ExtendError::OrientationIncompatible);
    }
    let source_map = solve_tree_complement(f.source(), tol)?;
    let image_map = if f.is_identity() {
        source_map.clone()
    } else {
        solve_tree_complement_seeded(f.image_tree(), tol, Some(&source_map))?
    };
    theta0_from_maps(&source_map, &image_map, f)
}

/// The radial extension of a circle homeomorphism to `A(1,2)`: each circle
/// `C(rho)` is rotated by the boundary map.
#[derive(Clone, Debug)]
pub struct RadialTheta {
    forward: CircleHomeo,
    backward: CircleHomeo,
}

/// Extends `t0` radially over the annulus `A(1,2)`.
pub fn radial_theta(t0: &CircleHomeo) -> RadialTheta {
    RadialTheta {
        backward: t0.inverse(),
        forward: t0.clone(),
    }
}

impl RadialTheta {
    /// Value at `z` with `1 <= |z| <= 2`.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        let r = z.norm();
        if r < 1e-300 {
            return z;
        }
        Complex64::from_polar(r, self.forward.eval(z.arg()))
    }

    /// Value of the inverse at `z`.
    pub fn invert(&self, z: Complex64) -> Complex64 {
        let r = z.norm();
        if r < 1e-300 {
            return z;
        }
        Complex64::from_polar(r, self.backward.eval(z.arg()))
    }
}

/// Collar data pinning the outer circle: below the inner collar radius the
/// map is untouched; across the collar the outer angle interpolates from
/// the map's own boundary rotation to the identity.
#[derive(Clone, Debug)]
struct PinData {
    collar_start: f64,
    boundary_inverse: CircleHomeo,
}

/// The extension homeomorphism of the closed radius-2 disk induced by a
/// tree embedding.
///
/// Off the tree it is the five-fold composite of the two uniformizing maps,
/// the two radial maps and the spliced rotation; on the tree it is the
/// embedding itself. Construction solves both slit complements.
#[derive(Clone, Debug)]
pub struct ExtendedHomeo {
    f: TreeEmbedding,
    source_map: AnnulusTreeMap,
    image_map: AnnulusTreeMap,
    theta: RadialTheta,
    pinned: Option<PinData>,
}

/// Builds the canonical extension of `f`, solving both annulus maps at
/// tolerance `tol`.
pub fn phi_tree(f: &TreeEmbedding, tol: f64) -> Result<ExtendedHomeo, ExtendError> {
    let source_map = solve_tree_complement(f.source(), tol)?;
    phi_tree_presolved(f, &source_map, tol)
}

/// As [`phi_tree`], reusing an already solved map of the source tree.
pub fn phi_tree_presolved(
    f: &TreeEmbedding,
    source_map: &AnnulusTreeMap,
    tol: f64,
) -> Result<ExtendedHomeo, ExtendError> {
    if !f.orientation_compatible() {
        return Err(ExtendError::OrientationIncompatible);
    }
    let image_map = if f.is_identity() {
        source_map.clone()
    } else {
        solve_tree_complement_seeded(f.image_tree(), tol, Some(source_map))?
    };
    let t0 = theta0_from_maps(source_map, &image_map, f)?;
    Ok(ExtendedHomeo {
        f: f.clone(),
        source_map: source_map.clone(),
        image_map,
        theta: radial_theta(&t0),
        pinned: None,
    })
}

impl ExtendedHomeo {
    /// The underlying embedding.
    pub fn embedding(&self) -> &TreeEmbedding {
        &self.f
    }

    /// Inner radius of the source annulus.
    pub fn r_source(&self) -> f64 {
        self.source_map.r
    }

    /// Inner radius of the image annulus.
    pub fn r_image(&self) -> f64 {
        self.image_map.r
    }

    /// The solved map of the source tree complement.
    pub fn source_map(&self) -> &AnnulusTreeMap {
        &self.source_map
    }

    /// The solved map of the image tree complement.
    pub fn image_map(&self) -> &AnnulusTreeMap {
        &self.image_map
    }

    /// The spliced inner circle homeomorphism.
    pub fn theta0(&self) -> &CircleHomeo {
        &self.theta.forward
    }

    /// True when the outer circle has been pinned to the identity.
    pub fn is_pinned(&self) -> bool {
        self.pinned.is_some()
    }

    fn core_eval(&self, x: Complex64) -> Result<Complex64, ExtendError> {
        let y = self.source_map.invert(x)?;
        let ri = self.source_map.r;
        let rf = self.image_map.r;
        let n = y.norm();
        let rho = 1.0 + (n - ri) / (2.0 - ri);
        let rho = rho.clamp(1.0, 2.0);
        let z = self.theta.eval(Complex64::from_polar(rho, y.arg()));
        let target = (2.0 - rf) * (z.norm() - 1.0) + rf;
        let w = Complex64::from_polar(target.clamp(rf, 2.0), z.arg());
        Ok(self.image_map.eval(w)?)
    }

    fn apply_pin(&self, w: Complex64) -> Complex64 {
        let pin = match &self.pinned {
            Some(p) => p,
            None => return w,
        };
        let rho = w.norm();
        if rho <= pin.collar_start {
            return w;
        }
        let u = ((rho - pin.collar_start) / (2.0 - pin.collar_start)).clamp(0.0, 1.0);
        let ru = pin.boundary_inverse.interpolate_from_identity(u);
        Complex64::from_polar(rho, ru.eval(w.arg()))
    }

    fn unapply_pin(&self, w: Complex64) -> Complex64 {
        let pin = match &self.pinned {
            Some(p) => p,
            None => return w,
        };
        let rho = w.norm();
        if rho <= pin.collar_start {
            return w;
        }
        let u = ((rho - pin.collar_start) / (2.0 - pin.collar_start)).clamp(0.0, 1.0);
        let ru = pin.boundary_inverse.interpolate_from_identity(u).inverse();
        Complex64::from_polar(rho, ru.eval(w.arg()))
    }

    /// Value of the extension at `x` in the closed radius-2 disk.
    ///
    /// Points on the tree map through the embedding exactly.
    pub fn eval(&self, x: Complex64) -> Result<Complex64, ExtendError> {
        if x.norm() > 2.0 + 1e-9 {
            return Err(ExtendError::Solver(AnnulusError::OutsideDomain));
        }
        if tree_distance(self.f.source(), x) <= 1e-12 {
            return self.f.eval(x);
        }
        Ok(self.apply_pin(self.core_eval(x)?))
    }

    /// Preimage of `y` under the extension.
    pub fn invert(&self, y: Complex64) -> Result<Complex64, ExtendError> {
        if y.norm() > 2.0 + 1e-9 {
            return Err(ExtendError::Solver(AnnulusError::OutsideDomain));
        }
        let y = self.unapply_pin(y);
        if tree_distance(self.f.image_tree(), y) <= 1e-12 {
            return self.f.eval_inverse(y);
        }
        let w = self.image_map.invert(y)?;
        let rf = self.image_map.r;
        let ri = self.source_map.r;
        let rho = 1.0 + (w.norm() - rf) / (2.0 - rf);
        let z = self.theta.invert(Complex64::from_polar(rho.clamp(1.0, 2.0), w.arg()));
        let target = (2.0 - ri) * (z.norm() - 1.0) + ri;
        let x = Complex64::from_polar(target.clamp(ri, 2.0), z.arg());
        Ok(self.source_map.eval(x)?)
    }

    /// The outer boundary rotation: the circle homeomorphism `b` with
    /// `eval(2 e^{it}) = 2 e^{i b(t)}` before pinning.
    pub fn boundary_homeo(&self) -> Result<CircleHomeo, ExtendError> {
        let mut nodes: Vec<f64> = (0..512).map(|j| TAU * j as f64 / 512.0).collect();
        for &t in self.theta.forward.nodes() {
            nodes.push(wrap_angle(t));
        }
        nodes.sort_unstable_by(|a, b| a.total_cmp(b));
        nodes.dedup_by(|a, b| (*a - *b).abs() < 1e-13);
        let mut samples = Vec::with_capacity(nodes.len());
        for &t in &nodes {
            let s = self.theta.forward.eval(t);
            let w = self.image_map.eval(Complex64::from_polar(2.0, s))?;
            samples.push((t, w.arg()));
        }
        CircleHomeo::from_samples(&samples).map_err(|_| ExtendError::SideMismatch)
    }
}

/// Returns a copy of `e` that is the identity on the outer circle.
///
/// The copy agrees with `e` exactly wherever `e`'s value has modulus at
/// most the collar start radius; in particular on the disk of radius
/// `2 - delta`, whose image is enclosed by the image of its boundary
/// circle. Across the collar the angular part interpolates the outer
/// boundary rotation away through monotone lifts.
pub fn pin_boundary(e: &ExtendedHomeo, delta: f64) -> Result<ExtendedHomeo, ExtendError> {
    if !(delta > 0.0 && delta < 2.0) {
        return Err(ExtendError::BadRadius);
    }
    let tree_reach = |t: &PlanarTree| {
        t.vertices
            .iter()
            .fold(0.0f64, |m, v| m.max(v.norm()))
    };
    if 2.0 - delta <= tree_reach(e.f.source()) + 1e-9 {
        return Err(ExtendError::CollarHitsTree);
    }
    let b = e.boundary_homeo()?;
    if b.max_deviation_from_identity() > 0.5 {
        return Err(ExtendError::BoundaryTooFar);
    }
    // The image of D(2 - delta) is enclosed by the image of its boundary
    // circle; the collar starts safely beyond its farthest point.
    let mut rho_max = 0.0f64;
    for j in 0..256 {
        let x = Complex64::from_polar(2.0 - delta, TAU * j as f64 / 256.0);
        rho_max = rho_max.max(e.core_eval(x)?.norm());
    }
    let collar_start = rho_max + 0.25 * (2.0 - rho_max);
    if collar_start <= tree_reach(e.f.image_tree()) + 1e-9 || collar_start >= 2.0 {
        return Err(ExtendError::CollarHitsTree);
    }
    let mut out = e.clone();
    out.pinned = Some(PinData {
        collar_start,
        boundary_inverse: b.inverse(),
    });
    Ok(out)
}

/// One row of a continuity tabulation.
#[derive(Clone, Copy, Debug)]
pub struct ContinuityRow {
    /// Path parameter.
    pub s: f64,
    /// `|r(f_s) - r(f_0)|`.
    pub r_deviation: f64,
    /// Sup distance of the composite maps over an annulus grid.
    pub psi_deviation: f64,
    /// Sup lift distance of the spliced circle homeomorphisms.
    pub theta_deviation: f64,
}

/// Deviation tabulation along a path of embeddings.
#[derive(Clone, Debug)]
pub struct ContinuityReport {
    /// Rows for `s = 1/samples, 2/samples, ..., 1`, measured against the
    /// path at `s = 0`.
    pub rows: Vec<ContinuityRow>,
}

/// Tabulates the continuity of the invariants along `path`, sampled at
/// `samples + 1` equispaced parameters; deviations are against `path(0)`.
pub fn continuity_probe<F>(
    path: F,
    samples: usize,
    tol: f64,
) -> Result<ContinuityReport, ExtendError>
where
    F: Fn(f64) -> Result<TreeEmbedding, ExtendError>,
{
    if samples == 0 {
        return Err(ExtendError::BadRho);
    }
    let base = path(0.0)?;
    let base_map = solve_tree_complement(base.image_tree(), tol)?;
    let base_source = solve_tree_complement(base.source(), tol)?;
    let base_theta = theta0_from_maps(&base_source, &base_map, &base)?;
    let base_pair = pair_from_map(base_map)?;

    let grid: Vec<Complex64> = {
        let mut g = Vec::new();
        for i in 0..4 {
            let rho = 1.0 + (i as f64 + 0.5) / 4.0;
            for j in 0..32 {
                g.push(Complex64::from_polar(rho, TAU * j as f64 / 32.0));
            }
        }
        g
    };

    let mut rows = Vec::with_capacity(samples);
    let mut seed = base_pair.map().clone();
    for i in 1..=samples {
        let s = i as f64 / samples as f64;
        let f = path(s)?;
        let image_map = solve_tree_complement_seeded(f.image_tree(), tol, Some(&seed))?;
        seed = image_map.clone();
        let theta = theta0_from_maps(&base_source, &image_map, &f)?;
        let pair = pair_from_map(image_map)?;
        let mut psi_dev = 0.0f64;
        for &z in &grid {
            psi_dev = psi_dev.max((pair.eval(z)? - base_pair.eval(z)?).norm());
        }
        rows.push(ContinuityRow {
            s,
            r_deviation: (pair.r - base_pair.r).abs(),
            psi_deviation: psi_dev,
            theta_deviation: theta.sup_lift_distance(&base_theta),
        });
    }
    Ok(ContinuityReport { rows })
}

/// Envelope for the length of short crosscut images: `2 pi R0 /
/// sqrt(log(1/rho))`.
pub fn length_distortion_bound(rho: f64, r0: f64) -> Result<f64, ExtendError> {
    if !(rho > 0.0 && rho < 1.0) || !(r0 > 2.0) {
        return Err(ExtendError::BadRho);
    }
    Ok(TAU * r0 / libm::sqrt(libm::log(1.0 / rho)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::rotate_tree;
    use crate::num::wrap_signed;
    use core::f64::consts::PI;

    fn tripod() -> PlanarTree {
        PlanarTree {
            vertices: vec![
                cx(0.05, -0.1),
                cx(0.9, 0.15),
                cx(-0.55, 0.8),
                cx(-0.4, -0.75),
            ],
            edges: vec![(0, 1), (0, 2), (0, 3)],
        }
    }

    #[test]
    fn radial_map_formula_and_inverse() {
        assert!(matches!(radial_map(0.0), Err(ExtendError::BadRadius)));
        assert!(matches!(radial_map(2.0), Err(ExtendError::BadRadius)));
        let id = radial_map(1.0).unwrap();
        let z = cx(0.3, 1.4);
        assert!((id.eval(z) - z).norm() <= 1e-15);
        let m = radial_map(0.4).unwrap();
        let inner = Complex64::from_polar(1.0, 0.7);
        assert!((m.eval(inner) - Complex64::from_polar(0.4, 0.7)).norm() <= 1e-15);
        let outer = Complex64::from_polar(2.0, -1.1);
        assert!((m.eval(outer) - outer).norm() <= 1e-15);
        let mid = Complex64::from_polar(1.37, 2.2);
        assert!((m.invert(m.eval(mid)) - mid).norm() <= 1e-14);
    }

    #[test]
    fn orientation_compatibility_is_detected() {
        let t = tripod();
        let id = TreeEmbedding::identity(&t).unwrap();
        assert!(id.orientation_compatible());
        let rot = rotate_tree(&t, 0.6);
        let f = TreeEmbedding::new(&t, &rot.vertices).unwrap();
        assert!(f.orientation_compatible());
        let mirrored: Vec<Point2> = t.vertices.iter().map(|v| v.conj()).collect();
        let g = TreeEmbedding::new(&t, &mirrored).unwrap();
        assert!(!g.orientation_compatible());
    }

    #[test]
    fn psi_pair_lands_inner_circle_on_the_image_tree() {
        let t = tripod();
        let f = TreeEmbedding::identity(&t).unwrap();
        let pair = psi_pair(&f, 1e-10).unwrap();
        assert!(pair.r > 0.0 && pair.r < 2.0);
        for j in 0..24 {
            let z = Complex64::from_polar(1.0, TAU * j as f64 / 24.0);
            let w = pair.eval(z).unwrap();
            assert!(
                tree_distance(&t, w) <= 1e-7,
                "inner circle image off the tree by {}",
                tree_distance(&t, w)
            );
        }
        let z2 = Complex64::from_polar(2.0, 0.4);
        assert!((pair.eval(z2).unwrap().norm() - 2.0).abs() <= 1e-9);
    }

    #[test]
    fn theta0_of_the_identity_is_the_identity() {
        let t = tripod();
        let f = TreeEmbedding::identity(&t).unwrap();
        let h = theta0(&f, 1e-10).unwrap();
        assert!(
            h.max_deviation_from_identity() <= 1e-7,
            "deviation {}",
            h.max_deviation_from_identity()
        );
    }

    #[test]
    fn theta0_of_a_rotation_is_rigid() {
        let t = tripod();
        let chi = 0.6;
        let rot = rotate_tree(&t, chi);
        let f = TreeEmbedding::new(&t, &rot.vertices).unwrap();
        let h = theta0(&f, 1e-10).unwrap();
        let c = h.eval_lift(0.0);
        let mut worst = 0.0f64;
        for j in 0..200 {
            let s = TAU * j as f64 / 200.0;
            worst = worst.max(wrap_signed(h.eval(s) - s - c).abs());
        }
        assert!(worst <= 1e-6, "wobble around rigid rotation {worst}");
    }

    #[test]
    fn extension_of_the_identity_is_near_identity() {
        let t = tripod();
        let f = TreeEmbedding::identity(&t).unwrap();
        let e = phi_tree(&f, 1e-10).unwrap();
        assert!((e.r_source() - e.r_image()).abs() <= 1e-12);
        let mut worst = 0.0f64;
        for i in 0..6 {
            let rho = 0.25 + 1.7 * (i as f64 + 0.5) / 6.0;
            for j in 0..16 {
                let x = Complex64::from_polar(rho, TAU * (j as f64 + 0.23) / 16.0);
                if tree_distance(&t, x) < 0.05 {
                    continue;
                }
                let y = e.eval(x).unwrap();
                worst = worst.max((y - x).norm());
            }
        }
        assert!(worst <= 1e-8, "identity extension deviates by {worst}");
    }

    #[test]
    fn extension_is_rotation_equivariant() {
        let t = tripod();
        let chi = 0.45;
        let rot = rotate_tree(&t, chi);
        let f = TreeEmbedding::new(&t, &rot.vertices).unwrap();
        let e = phi_tree(&f, 1e-10).unwrap();
        assert!(
            (e.r_source() - e.r_image()).abs() <= 1e-8,
            "conformal radius moved by {}",
            (e.r_source() - e.r_image()).abs()
        );
        let spin = Complex64::from_polar(1.0, chi);
        let mut worst = 0.0f64;
        for i in 0..5 {
            let rho = 0.3 + 1.6 * (i as f64 + 0.5) / 5.0;
            for j in 0..12 {
                let x = Complex64::from_polar(rho, TAU * (j as f64 + 0.41) / 12.0);
                if tree_distance(&t, x) < 0.05 {
                    continue;
                }
                let y = e.eval(x).unwrap();
                worst = worst.max((y - spin * x).norm());
            }
        }
        assert!(worst <= 1e-6, "equivariance defect {worst}");
        let x = cx(1.2, 0.5);
        let y = e.eval(x).unwrap();
        let back = e.invert(y).unwrap();
        assert!((back - x).norm() <= 1e-7, "inverse defect {}", (back - x).norm());
    }

    fn perturbed_embedding(t: &PlanarTree, s: f64) -> Result<TreeEmbedding, ExtendError> {
        let images: Vec<Point2> = t
            .vertices
            .iter()
            .enumerate()
            .map(|(j, v)| {
                v + s * match j {
                    1 => cx(0.06, 0.03),
                    2 => cx(-0.02, -0.05),
                    3 => cx(0.03, -0.04),
                    _ => cx(0.0, 0.0),
                }
            })
            .collect();
        TreeEmbedding::new(t, &images)
    }

    #[test]
    fn pinning_fixes_the_outer_circle() {
        let t = tripod();
        let f = perturbed_embedding(&t, 1.0).unwrap();
        let e = phi_tree(&f, 1e-10).unwrap();
        let pinned = pin_boundary(&e, 0.25).unwrap();
        assert!(pinned.is_pinned());
        let mut worst = 0.0f64;
        for j in 0..64 {
            let x = Complex64::from_polar(2.0, TAU * (j as f64 + 0.37) / 64.0);
            let y = pinned.eval(x).unwrap();
            worst = worst.max((y - x).norm());
        }
        assert!(worst <= 1e-4, "outer circle moves by {worst}");
        // Inside the collar the pinned and unpinned maps agree exactly.
        for j in 0..16 {
            let x = Complex64::from_polar(1.2, TAU * j as f64 / 16.0);
            assert_eq!(pinned.eval(x).unwrap(), e.eval(x).unwrap());
        }
        // On the tree both restrict to f.
        let p = cx(0.05, -0.1);
        assert_eq!(pinned.eval(p).unwrap(), f.eval(p).unwrap());
        assert!(matches!(
            pin_boundary(&e, 1.9),
            Err(ExtendError::CollarHitsTree)
        ));
    }

    #[test]
    fn pinning_rejects_a_large_boundary_rotation() {
        let t = tripod();
        let rot = rotate_tree(&t, 1.2);
        let f = TreeEmbedding::new(&t, &rot.vertices).unwrap();
        let e = phi_tree(&f, 1e-10).unwrap();
        assert!(matches!(
            pin_boundary(&e, 0.2),
            Err(ExtendError::BoundaryTooFar)
        ));
    }

    #[test]
    fn continuity_probe_deviations_shrink_toward_the_base() {
        let t = tripod();
        let report = continuity_probe(|s| perturbed_embedding(&t, s), 3, 1e-10).unwrap();
        assert_eq!(report.rows.len(), 3);
        let r = &report.rows;
        for w in r.windows(2) {
            assert!(w[0].s < w[1].s);
            assert!(w[0].psi_deviation <= w[1].psi_deviation + 1e-9);
            assert!(w[0].theta_deviation <= w[1].theta_deviation + 1e-9);
        }
        assert!(r[r.len() - 1].psi_deviation > 1e-4, "path visibly moves");
    }

    #[test]
    fn length_distortion_bound_matches_closed_forms() {
        let b1 = length_distortion_bound(libm::exp(-1.0), 2.5).unwrap();
        assert!((b1 - 5.0 * PI).abs() <= 1e-12);
        let b2 = length_distortion_bound(libm::exp(-16.0), 2.5).unwrap();
        assert!((b2 - 1.25 * PI).abs() <= 1e-12);
        assert!(matches!(
            length_distortion_bound(1.5, 2.5),
            Err(ExtendError::BadRho)
        ));
        assert!(matches!(
            length_distortion_bound(0.5, 1.0),
            Err(ExtendError::BadRho)
        ));
    }
}
