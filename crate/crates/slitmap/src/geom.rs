//! Planar trees, their boundary walks and metric helpers.
//!
//! A tree is given by straight edges between distinct vertices; it must be
//! embedded (no crossings, no zero-angle branches) and contained in the open
//! disk of radius 2. The central derived object is the boundary walk: the
//! closed curve a point travels when it goes around the tree once
//! counterclockwise, touching each edge once per side. Every downstream
//! solver consumes the walk rather than the raw edge list, because the walk
//! carries the corner structure (sector angles, hence mapping exponents)
//! that the conformal machinery needs.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::num::wrap_angle;

/// Points are complex numbers throughout; re is x, im is y.
pub type Point2 = Complex64;

/// Geometric tolerance for coincidence and intersection decisions.
pub const GEOM_TOL: f64 = 1e-9;

/// Errors from tree validation and arc queries.
#[derive(Clone, Debug, PartialEq)]
pub enum GeomError {
    /// The edge set contains a cycle (self-loop, duplicate edge, or E >= V).
    CyclicGraph,
    /// The graph is not connected.
    Disconnected,
    /// Two edges cross, overlap, or two vertices coincide.
    SelfIntersection,
    /// A vertex lies outside (or on) the circle of radius 2.
    OutsideDisk,
    /// A query point is farther than the tolerance from every edge.
    PointNotOnTree,
    /// An edge is shorter than the tolerance.
    DegenerateArc,
    /// An operation received an empty point set.
    EmptySet,
}

impl core::fmt::Display for GeomError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            GeomError::CyclicGraph => write!(f, "edge set contains a cycle"),
            GeomError::Disconnected => write!(f, "graph is not connected"),
            GeomError::SelfIntersection => write!(f, "embedding self-intersects"),
            GeomError::OutsideDisk => write!(f, "vertex outside the radius-2 disk"),
            GeomError::PointNotOnTree => write!(f, "point does not lie on the tree"),
            GeomError::DegenerateArc => write!(f, "degenerate (too short) edge or arc"),
            GeomError::EmptySet => write!(f, "empty point set"),
        }
    }
}

impl core::error::Error for GeomError {}

/// A finite tree embedded in the plane with straight edges.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanarTree {
    pub vertices: Vec<Point2>,
    /// Unordered vertex index pairs.
    pub edges: Vec<(usize, usize)>,
}

/// A simple polyline arc.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyArc {
    pub points: Vec<Point2>,
}

impl PolyArc {
    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    /// Diameter of the arc as a point set. For a polyline the diameter is
    /// attained at breakpoints, so the pairwise maximum over them is exact.
    pub fn diameter(&self) -> f64 {
        let mut d = 0.0f64;
        for i in 0..self.points.len() {
            for j in i + 1..self.points.len() {
                d = d.max((self.points[i] - self.points[j]).norm());
            }
        }
        d
    }
}

/// One corner of the boundary walk.
#[derive(Clone, Debug)]
pub struct WalkCorner {
    /// Index of the tree vertex this corner sits at.
    pub vertex: usize,
    pub point: Point2,
    /// Angle of the sector swept between the incoming and outgoing sides,
    /// in (0, 2*pi]. A leaf tip has sector 2*pi.
    pub sector_angle: f64,
    /// Mapping exponent `sector_angle / pi - 1`.
    pub beta: f64,
}

/// One side of the boundary walk: a directed traversal of a tree edge.
#[derive(Clone, Debug)]
pub struct WalkSide {
    /// Index into the tree's edge list.
    pub edge: usize,
    /// True when traversed from `edges[edge].0` toward `edges[edge].1`.
    pub forward: bool,
    pub from: Point2,
    pub to: Point2,
    /// Angle of `to - from`.
    pub direction: f64,
    pub length: f64,
}

/// The closed counterclockwise walk around a tree.
///
/// Side `k` runs from corner `k` to corner `k + 1` (cyclically); every tree
/// edge appears exactly twice, once per side, and the sector angles at each
/// tree vertex sum to `2*pi`.
#[derive(Clone, Debug)]
pub struct BoundaryWalk {
    pub corners: Vec<WalkCorner>,
    pub sides: Vec<WalkSide>,
}

impl BoundaryWalk {
    pub fn len(&self) -> usize {
        self.sides.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sides.is_empty()
    }

    /// Total length of the walk (twice the total edge length).
    pub fn perimeter(&self) -> f64 {
        self.sides.iter().map(|s| s.length).sum()
    }
}

/// Distance from `p` to the segment `[a, b]`.
pub fn segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).re * ab.re + (p - a).im * ab.im) / len2;
    let t = t.clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Nearest point on the segment `[a, b]` to `p`, returned with its
/// parameter in `[0, 1]`.
pub fn segment_project(p: Point2, a: Point2, b: Point2) -> (Point2, f64) {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 == 0.0 {
        return (a, 0.0);
    }
    let t = (((p - a).re * ab.re + (p - a).im * ab.im) / len2).clamp(0.0, 1.0);
    (a + ab * t, t)
}

/// Minimum distance between the segments `[a, b]` and `[c, d]`.
pub fn segment_segment_distance(a: Point2, b: Point2, c: Point2, d: Point2) -> f64 {
    fn cross(u: Point2, v: Point2) -> f64 {
        u.re * v.im - u.im * v.re
    }
    // Proper crossing test first.
    let d1 = cross(b - a, c - a);
    let d2 = cross(b - a, d - a);
    let d3 = cross(d - c, a - c);
    let d4 = cross(d - c, b - c);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return 0.0;
    }
    segment_distance(a, c, d)
        .min(segment_distance(b, c, d))
        .min(segment_distance(c, a, b))
        .min(segment_distance(d, a, b))
}

/// Distance from a point to the tree (minimum over edges).
pub fn tree_distance(tree: &PlanarTree, p: Point2) -> f64 {
    tree.edges
        .iter()
        .map(|&(i, j)| segment_distance(p, tree.vertices[i], tree.vertices[j]))
        .fold(f64::INFINITY, f64::min)
}

/// Signed area of a polygon (positive when counterclockwise).
pub fn polygon_signed_area(pts: &[Point2]) -> f64 {
    let n = pts.len();
    let mut s = 0.0;
    for i in 0..n {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        s += a.re * b.im - b.re * a.im;
    }
    0.5 * s
}

/// Even-odd point-in-polygon test.
pub fn point_in_polygon(pts: &[Point2], p: Point2) -> bool {
    let n = pts.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (pts[i], pts[j]);
        if (a.im > p.im) != (b.im > p.im) {
            let x = a.re + (p.im - a.im) / (b.im - a.im) * (b.re - a.re);
            if p.re < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn adjacency(tree: &PlanarTree) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); tree.vertices.len()];
    for &(i, j) in &tree.edges {
        adj[i].push(j);
        adj[j].push(i);
    }
    adj
}

/// Checks that the data describes an embedded tree inside the open disk of
/// radius 2: connected, acyclic, edges longer than `tol`, no two edges
/// closer than `tol` except at shared endpoints, and distinct branch
/// directions at every vertex.
pub fn validate_tree(tree: &PlanarTree, tol: f64) -> Result<(), GeomError> {
    let nv = tree.vertices.len();
    if nv == 0 || tree.edges.is_empty() {
        return Err(GeomError::EmptySet);
    }
    for &(i, j) in &tree.edges {
        if i >= nv || j >= nv {
            return Err(GeomError::Disconnected);
        }
        if i == j {
            return Err(GeomError::CyclicGraph);
        }
        if (tree.vertices[i] - tree.vertices[j]).norm() <= tol {
            return Err(GeomError::DegenerateArc);
        }
    }
    if tree.edges.len() != nv - 1 {
        return Err(if tree.edges.len() >= nv {
            GeomError::CyclicGraph
        } else {
            GeomError::Disconnected
        });
    }
    // Connectivity; with E = V - 1 this also rules out cycles.
    let adj = adjacency(tree);
    let mut seen = vec![false; nv];
    let mut queue = VecDeque::new();
    queue.push_back(0usize);
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                count += 1;
                queue.push_back(w);
            }
        }
    }
    if count != nv {
        return Err(GeomError::Disconnected);
    }
    for v in &tree.vertices {
        if v.norm() >= 2.0 - tol {
            return Err(GeomError::OutsideDisk);
        }
    }
    for i in 0..nv {
        for j in i + 1..nv {
            if (tree.vertices[i] - tree.vertices[j]).norm() <= tol {
                return Err(GeomError::SelfIntersection);
            }
        }
    }
    // Non-adjacent edges must stay apart; adjacent edges must leave their
    // shared vertex in genuinely different directions.
    for (ei, &(a, b)) in tree.edges.iter().enumerate() {
        for (ej, &(c, d)) in tree.edges.iter().enumerate().skip(ei + 1) {
            let shared = [a, b].iter().any(|x| [c, d].contains(x));
            if !shared {
                let dist = segment_segment_distance(
                    tree.vertices[a],
                    tree.vertices[b],
                    tree.vertices[c],
                    tree.vertices[d],
                );
                if dist <= tol {
                    return Err(GeomError::SelfIntersection);
                }
            } else {
                let _ = ej;
            }
        }
    }
    for (v, nbrs) in adj.iter().enumerate() {
        for (i, &p) in nbrs.iter().enumerate() {
            for &q in nbrs.iter().skip(i + 1) {
                let tp = (tree.vertices[p] - tree.vertices[v]).arg();
                let tq = (tree.vertices[q] - tree.vertices[v]).arg();
                let gap = wrap_angle(tp - tq);
                if gap.min(core::f64::consts::TAU - gap) <= 1e-7 {
                    return Err(GeomError::SelfIntersection);
                }
            }
        }
    }
    Ok(())
}

/// Builds the counterclockwise boundary walk.
///
/// The traversal rule: arriving at vertex `v` along an edge from `u`, the
/// walk departs along the neighbor `w` whose direction is the smallest
/// counterclockwise rotation of the back-direction toward `u` (a full turn
/// for a leaf). This keeps the tree on the left of travel, which is the
/// counterclockwise sense around the tree.
///
/// The caller must have validated the tree.
pub fn boundary_walk(tree: &PlanarTree) -> BoundaryWalk {
    let adj = adjacency(tree);
    let mut edge_index = alloc::collections::BTreeMap::new();
    for (k, &(i, j)) in tree.edges.iter().enumerate() {
        edge_index.insert((i, j), k);
        edge_index.insert((j, i), k);
    }
    let start_leaf = (0..tree.vertices.len())
        .find(|&v| adj[v].len() == 1)
        .expect("a validated tree has a leaf");
    let start = (start_leaf, adj[start_leaf][0]);

    let next_vertex = |u: usize, v: usize| -> (usize, f64) {
        let d_in = (tree.vertices[u] - tree.vertices[v]).arg();
        let mut best = (usize::MAX, f64::INFINITY);
        for &w in &adj[v] {
            let mut gap = wrap_angle((tree.vertices[w] - tree.vertices[v]).arg() - d_in);
            if gap == 0.0 {
                gap = core::f64::consts::TAU;
            }
            if gap < best.1 {
                best = (w, gap);
            }
        }
        best
    };

    let mut visits = vec![start];
    let mut sectors = Vec::new();
    let (mut u, mut v) = start;
    loop {
        let (w, gap) = next_vertex(u, v);
        sectors.push(gap);
        if (v, w) == start {
            break;
        }
        visits.push((v, w));
        u = v;
        v = w;
    }
    // sectors[k] is the sector at the head of side k, i.e. at corner k + 1.
    let m = visits.len();
    let mut corners = Vec::with_capacity(m);
    let mut sides = Vec::with_capacity(m);
    for (k, &(a, b)) in visits.iter().enumerate() {
        let sector = sectors[(k + m - 1) % m];
        corners.push(WalkCorner {
            vertex: a,
            point: tree.vertices[a],
            sector_angle: sector,
            beta: sector / core::f64::consts::PI - 1.0,
        });
        let from = tree.vertices[a];
        let to = tree.vertices[b];
        let key = edge_index[&(a, b)];
        sides.push(WalkSide {
            edge: key,
            forward: tree.edges[key] == (a, b),
            from,
            to,
            direction: (to - from).arg(),
            length: (to - from).norm(),
        });
    }
    BoundaryWalk { corners, sides }
}

/// Locates the nearest point of the tree to `p`, as `(edge, parameter,
/// point)`. Fails if `p` is farther than `tol` from every edge.
pub fn locate_on_tree(
    tree: &PlanarTree,
    p: Point2,
    tol: f64,
) -> Result<(usize, f64, Point2), GeomError> {
    let mut best = (usize::MAX, 0.0, Point2::new(0.0, 0.0), f64::INFINITY);
    for (k, &(i, j)) in tree.edges.iter().enumerate() {
        let (proj, t) = segment_project(p, tree.vertices[i], tree.vertices[j]);
        let d = (p - proj).norm();
        if d < best.3 {
            best = (k, t, proj, d);
        }
    }
    if best.3 > tol {
        return Err(GeomError::PointNotOnTree);
    }
    Ok((best.0, best.1, best.2))
}

/// The unique arc of the tree joining two of its points, as a polyline.
pub fn tree_arc(
    tree: &PlanarTree,
    p: Point2,
    q: Point2,
    tol: f64,
) -> Result<PolyArc, GeomError> {
    let (ep, _tp, pp) = locate_on_tree(tree, p, tol)?;
    let (eq, tq, pq) = locate_on_tree(tree, q, tol)?;
    if (pp - pq).norm() <= tol {
        return Ok(PolyArc { points: vec![pp, pq] });
    }
    if ep == eq {
        return Ok(PolyArc { points: vec![pp, pq] });
    }
    // Path between edge endpoints through the tree, then splice the interior
    // points in.
    let adj = adjacency(tree);
    let (a0, a1) = tree.edges[ep];
    let (b0, b1) = tree.edges[eq];
    let nv = tree.vertices.len();
    let mut parent = vec![usize::MAX; nv];
    let mut seen = vec![false; nv];
    let mut queue = VecDeque::new();
    // Seed from both endpoints of the source edge; forbid walking across the
    // source edge itself so the two seeds stay in their own components.
    for &s in &[a0, a1] {
        seen[s] = true;
        parent[s] = s;
        queue.push_back(s);
    }
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if (v == a0 && w == a1) || (v == a1 && w == a0) {
                continue;
            }
            if !seen[w] {
                seen[w] = true;
                parent[w] = v;
                queue.push_back(w);
            }
        }
    }
    // Walk up from the nearer endpoint of the target edge.
    let start_b = if tq <= 0.5 { b0 } else { b1 };
    let start_b = if seen[start_b] { start_b } else if tq <= 0.5 { b1 } else { b0 };
    if !seen[start_b] {
        return Err(GeomError::Disconnected);
    }
    let mut chain = vec![start_b];
    let mut v = start_b;
    while parent[v] != v {
        v = parent[v];
        chain.push(v);
    }
    // `chain` now runs from the target edge's endpoint to a0 or a1.
    chain.reverse();
    let mut points = vec![pp];
    for &c in &chain {
        points.push(tree.vertices[c]);
    }
    points.push(pq);
    // Drop immediate repeats (p exactly at a vertex, etc.).
    points.dedup_by(|a, b| (*a - *b).norm() <= tol);
    if points.len() < 2 {
        points = vec![pp, pq];
    }
    Ok(PolyArc { points })
}

/// Hausdorff distance between two polylines.
///
/// One side is sampled at spacing at most `step` and measured exactly
/// against the other side's segments; symmetrizing gives the usual
/// two-sided distance with sampling error below `step / 2`.
pub fn hausdorff_distance(a: &PolyArc, b: &PolyArc, step: f64) -> Result<f64, GeomError> {
    if a.points.is_empty() || b.points.is_empty() {
        return Err(GeomError::EmptySet);
    }
    let one_sided = |x: &PolyArc, y: &PolyArc| -> f64 {
        let mut sup = 0.0f64;
        let dist_to_y = |p: Point2| {
            y.points
                .windows(2)
                .map(|w| segment_distance(p, w[0], w[1]))
                .fold((p - y.points[0]).norm(), f64::min)
        };
        if x.points.len() == 1 {
            return dist_to_y(x.points[0]);
        }
        for w in x.points.windows(2) {
            let len = (w[1] - w[0]).norm();
            let n = libm::ceil(len / step).max(1.0) as usize;
            for i in 0..=n {
                let p = w[0] + (w[1] - w[0]) * (i as f64 / n as f64);
                sup = sup.max(dist_to_y(p));
            }
        }
        sup
    };
    Ok(one_sided(a, b).max(one_sided(b, a)))
}

/// Local connectivity modulus of the tree at scale `eps`: the largest
/// `delta <= eps` such that any two tree points within `delta` of each
/// other are joined by a subarc of diameter below `eps`. Estimated on a
/// uniform sampling of the edges.
pub fn ulc_modulus(tree: &PlanarTree, eps: f64, samples_per_edge: usize) -> Result<f64, GeomError> {
    if tree.edges.is_empty() {
        return Err(GeomError::EmptySet);
    }
    if eps <= 0.0 {
        return Err(GeomError::EmptySet);
    }
    let mut samples = Vec::new();
    for &(i, j) in &tree.edges {
        let (a, b) = (tree.vertices[i], tree.vertices[j]);
        for k in 0..=samples_per_edge {
            samples.push(a + (b - a) * (k as f64 / samples_per_edge as f64));
        }
    }
    let mut delta = eps;
    for i in 0..samples.len() {
        for j in i + 1..samples.len() {
            let d = (samples[i] - samples[j]).norm();
            if d >= delta {
                continue;
            }
            let arc = tree_arc(tree, samples[i], samples[j], 1e-7)?;
            if arc.diameter() >= eps {
                delta = d;
            }
        }
    }
    Ok(delta)
}

/// Rotates every vertex about the origin.
pub fn rotate_tree(tree: &PlanarTree, angle: f64) -> PlanarTree {
    let rot = Complex64::new(libm::cos(angle), libm::sin(angle));
    PlanarTree {
        vertices: tree.vertices.iter().map(|v| v * rot).collect(),
        edges: tree.edges.clone(),
    }
}

/// Reflects every vertex across the x axis.
pub fn reflect_tree(tree: &PlanarTree) -> PlanarTree {
    PlanarTree {
        vertices: tree.vertices.iter().map(|v| v.conj()).collect(),
        edges: tree.edges.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::{PI, TAU};

    pub(crate) fn segment_tree(a: f64) -> PlanarTree {
        PlanarTree {
            vertices: vec![Point2::new(-a, 0.0), Point2::new(a, 0.0)],
            edges: vec![(0, 1)],
        }
    }

    fn tripod() -> PlanarTree {
        PlanarTree {
            vertices: vec![
                Point2::new(0.0, 0.0),
                Point2::new(0.8, 0.0),
                Point2::new(-0.4, 0.7),
                Point2::new(-0.4, -0.7),
            ],
            edges: vec![(0, 1), (0, 2), (0, 3)],
        }
    }

    #[test]
    fn validate_accepts_simple_trees() {
        assert_eq!(validate_tree(&segment_tree(0.5), GEOM_TOL), Ok(()));
        assert_eq!(validate_tree(&tripod(), GEOM_TOL), Ok(()));
    }

    #[test]
    fn validate_rejects_cycles_disconnection_and_crossings() {
        let square = PlanarTree {
            vertices: vec![
                Point2::new(0.0, 0.0),
                Point2::new(1.0, 0.0),
                Point2::new(1.0, 1.0),
                Point2::new(0.0, 1.0),
            ],
            edges: vec![(0, 1), (1, 2), (2, 3), (3, 0)],
        };
        assert_eq!(validate_tree(&square, GEOM_TOL), Err(GeomError::CyclicGraph));

        let split = PlanarTree {
            vertices: vec![
                Point2::new(0.0, 0.0),
                Point2::new(0.5, 0.0),
                Point2::new(0.0, 0.5),
                Point2::new(0.5, 0.5),
            ],
            edges: vec![(0, 1), (2, 3)],
        };
        assert_eq!(validate_tree(&split, GEOM_TOL), Err(GeomError::Disconnected));

        let cross = PlanarTree {
            vertices: vec![
                Point2::new(-0.5, 0.0),
                Point2::new(0.5, 0.0),
                Point2::new(0.0, -0.5),
                Point2::new(0.0, 0.5),
            ],
            edges: vec![(0, 1), (2, 3), (1, 2)],
        };
        assert_eq!(validate_tree(&cross, GEOM_TOL), Err(GeomError::SelfIntersection));

        let outside = segment_tree(2.5);
        assert_eq!(validate_tree(&outside, GEOM_TOL), Err(GeomError::OutsideDisk));
    }

    #[test]
    fn walk_visits_each_edge_twice_in_both_directions() {
        for tree in [segment_tree(0.5), tripod()] {
            let walk = boundary_walk(&tree);
            assert_eq!(walk.len(), 2 * tree.edges.len());
            let mut counts = vec![(0, 0); tree.edges.len()];
            for s in &walk.sides {
                if s.forward {
                    counts[s.edge].0 += 1;
                } else {
                    counts[s.edge].1 += 1;
                }
            }
            assert!(counts.iter().all(|&c| c == (1, 1)));
        }
    }

    #[test]
    fn walk_sector_angles_sum_to_full_turns() {
        for tree in [segment_tree(0.5), tripod()] {
            let walk = boundary_walk(&tree);
            let total: f64 = walk.corners.iter().map(|c| c.sector_angle).sum();
            assert!((total - TAU * tree.vertices.len() as f64).abs() < 1e-10);
            let beta_sum: f64 = walk.corners.iter().map(|c| c.beta).sum();
            assert!((beta_sum - 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn walk_of_a_segment_has_two_full_turn_tips() {
        let walk = boundary_walk(&segment_tree(0.5));
        for c in &walk.corners {
            assert!((c.sector_angle - TAU).abs() < 1e-12);
            assert!((c.beta - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn walk_orientation_is_counterclockwise_around_the_tree() {
        // Push each side's midpoint slightly into the domain (right of
        // travel is away from the tree on the left) and check the resulting
        // polygon is counterclockwise.
        let tree = tripod();
        let walk = boundary_walk(&tree);
        let mut loop_pts = Vec::new();
        for s in &walk.sides {
            let mid = (s.from + s.to) * 0.5;
            let normal = Point2::new(libm::cos(s.direction - PI / 2.0), libm::sin(s.direction - PI / 2.0));
            loop_pts.push(mid + normal * 1e-3);
        }
        assert!(polygon_signed_area(&loop_pts) > 0.0);
    }

    #[test]
    fn tripod_sectors_match_hand_computed_angles() {
        // At the tripod's center the three branch directions are known, so
        // the three sectors there are the consecutive direction gaps.
        let tree = tripod();
        let walk = boundary_walk(&tree);
        let mut center_sectors: Vec<f64> = walk
            .corners
            .iter()
            .filter(|c| c.vertex == 0)
            .map(|c| c.sector_angle)
            .collect();
        center_sectors.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let dirs = [
            (tree.vertices[1] - tree.vertices[0]).arg(),
            (tree.vertices[2] - tree.vertices[0]).arg(),
            (tree.vertices[3] - tree.vertices[0]).arg(),
        ];
        let mut gaps = vec![
            wrap_angle(dirs[1] - dirs[0]),
            wrap_angle(dirs[2] - dirs[1]),
            wrap_angle(dirs[0] - dirs[2]),
        ];
        gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (s, g) in center_sectors.iter().zip(&gaps) {
            assert!((s - g).abs() < 1e-12);
        }
    }

    #[test]
    fn tree_arc_follows_the_unique_path() {
        let tree = tripod();
        let p = Point2::new(0.4, 0.0);
        let q = Point2::new(-0.2, 0.35);
        let arc = tree_arc(&tree, p, q, 1e-9).unwrap();
        // Path must pass through the center vertex.
        assert!(arc.points.iter().any(|&x| (x - tree.vertices[0]).norm() < 1e-12));
        let expected = (p - tree.vertices[0]).norm() + (q - tree.vertices[0]).norm();
        assert!((arc.length() - expected).abs() < 1e-12);
    }

    #[test]
    fn tree_arc_rejects_points_off_the_tree() {
        let tree = segment_tree(0.5);
        let err = tree_arc(&tree, Point2::new(0.0, 0.3), Point2::new(0.1, 0.0), 1e-9);
        assert_eq!(err, Err(GeomError::PointNotOnTree));
    }

    #[test]
    fn hausdorff_distance_of_parallel_segments() {
        let a = PolyArc { points: vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0)] };
        let b = PolyArc { points: vec![Point2::new(0.0, 0.25), Point2::new(1.0, 0.25)] };
        let d = hausdorff_distance(&a, &b, 1e-3).unwrap();
        assert!((d - 0.25).abs() < 1e-6);
    }

    #[test]
    fn hausdorff_distance_is_asymmetric_before_symmetrization() {
        // A short segment against a long one: the sup is realized on the
        // long one's far end.
        let a = PolyArc { points: vec![Point2::new(0.0, 0.0), Point2::new(0.1, 0.0)] };
        let b = PolyArc { points: vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0)] };
        let d = hausdorff_distance(&a, &b, 1e-3).unwrap();
        assert!((d - 0.9).abs() < 1e-6);
    }

    #[test]
    fn ulc_modulus_sees_the_pinch_between_close_branches() {
        // Two long parallel branches 0.1 apart: points on opposite branches
        // are close in the plane but far along the tree, so the modulus at
        // eps = 0.5 must drop to about the branch separation.
        let tree = PlanarTree {
            vertices: vec![
                Point2::new(-1.0, 0.0),
                Point2::new(0.0, 0.0),
                Point2::new(-1.0, 0.1),
            ],
            edges: vec![(0, 1), (1, 2)],
        };
        let delta = ulc_modulus(&tree, 0.5, 24).unwrap();
        assert!(delta < 0.2, "delta = {delta}");
        // A straight segment has no pinch: the modulus stays at eps.
        let seg = segment_tree(0.9);
        let delta_seg = ulc_modulus(&seg, 0.5, 24).unwrap();
        assert!((delta_seg - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rotation_and_reflection_preserve_walk_structure() {
        let tree = tripod();
        let rot = rotate_tree(&tree, 1.1);
        assert_eq!(validate_tree(&rot, GEOM_TOL), Ok(()));
        let w0 = boundary_walk(&tree);
        let w1 = boundary_walk(&rot);
        assert_eq!(w0.len(), w1.len());
        let s0: f64 = w0.corners.iter().map(|c| c.sector_angle).sum();
        let s1: f64 = w1.corners.iter().map(|c| c.sector_angle).sum();
        assert!((s0 - s1).abs() < 1e-9);
        let refl = reflect_tree(&tree);
        assert_eq!(validate_tree(&refl, GEOM_TOL), Ok(()));
        assert_eq!(boundary_walk(&refl).len(), w0.len());
    }
}
