use super::{Boundary, BoundaryParam, QuadratureGrid};
use crate::quadrature::GaussLegendre;
use crate::{Error, Point, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Generated depths lie in `[MIN_DEPTH_FRACTION·ε, ε]`; keeping nodes off
/// the boundary keeps the boundary integrals at these nodes resolvable.
pub const MIN_DEPTH_FRACTION: f64 = 0.25;

const MAX_ATTEMPTS: usize = 8;

/// Interior nodes together with the boundary parameter and depth they were
/// generated from.
#[derive(Debug, Clone, PartialEq)]
pub struct InteriorNodeSet<const D: usize> {
    pub nodes: Vec<Point<D>>,
    /// `dist(node, ∂Ω) ≤ ε`.
    pub layer_flag: Vec<bool>,
    /// Foot point parameter of each node (for layer nodes).
    pub params: Vec<Option<BoundaryParam>>,
    /// Distance to the boundary.
    pub depths: Vec<f64>,
}

impl<const D: usize> InteriorNodeSet<D> {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes without layer metadata, e.g. a deep-interior lattice.
    pub fn from_points<G: Boundary<D> + ?Sized>(geom: &G, points: Vec<Point<D>>, eps: f64) -> Self {
        let mut depths = Vec::with_capacity(points.len());
        let mut params = Vec::with_capacity(points.len());
        for p in &points {
            let pr = geom.project(p, None);
            depths.push(pr.depth);
            params.push(Some(pr.frame.param));
        }
        Self {
            layer_flag: depths.iter().map(|&d| d <= eps).collect(),
            nodes: points,
            params,
            depths,
        }
    }

    /// Concatenation, keeping node order.
    pub fn extend(&mut self, other: &Self) {
        self.nodes.extend_from_slice(&other.nodes);
        self.layer_flag.extend_from_slice(&other.layer_flag);
        self.params.extend_from_slice(&other.params);
        self.depths.extend_from_slice(&other.depths);
    }
}

/// `count` nodes in the layer `{x ∈ Ω : dist(x, ∂Ω) ≤ ε}`.
///
/// Boundary parameters are spread quasi-uniformly, and each node is pushed
/// inward along `−ν` by a stratified random depth. A node whose offset does
/// not land at its intended distance (the normal offset folds over in
/// strongly curved regions) is retried at half the depth.
pub fn layer_nodes<G: Boundary<D> + ?Sized, const D: usize>(
    geom: &G,
    eps: f64,
    count: usize,
    seed: u64,
) -> Result<InteriorNodeSet<D>> {
    if !(eps > 0.0) {
        return Err(Error::param("eps", format!("must be positive, got {eps}")));
    }
    if count == 0 {
        return Err(Error::param("count", "need at least one node"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut strata: Vec<usize> = (0..count).collect();
    strata.shuffle(&mut rng);
    let tol = 1e-8 * geom.diameter();
    let mut set = InteriorNodeSet {
        nodes: Vec::with_capacity(count),
        layer_flag: Vec::with_capacity(count),
        params: Vec::with_capacity(count),
        depths: Vec::with_capacity(count),
    };
    for (index, param) in geom.spread_params(count).into_iter().enumerate() {
        let u: f64 = rng.gen();
        let frac = (strata[index] as f64 + u) / count as f64;
        let mut depth = eps * (MIN_DEPTH_FRACTION + (1.0 - MIN_DEPTH_FRACTION) * frac);
        let frame = geom.frame(param);
        let mut placed = false;
        for _ in 0..MAX_ATTEMPTS {
            let p = geom.offset(&frame, depth);
            let pr = geom.project(&p, Some(param));
            if geom.contains(&p) && (pr.depth - depth).abs() <= tol && geom.distance(&p) >= depth - tol {
                set.nodes.push(p);
                set.layer_flag.push(true);
                set.params.push(Some(param));
                set.depths.push(depth);
                placed = true;
                break;
            }
            depth *= 0.5;
        }
        if !placed {
            return Err(Error::Placement {
                index,
                attempts: MAX_ATTEMPTS,
            });
        }
    }
    Ok(set)
}

/// Area (2D) or surface (3D) element of the parallel surface at depth `s`
/// in parameter coordinates, by central differences.
fn parallel_element<G: Boundary<D> + ?Sized, const D: usize>(geom: &G, param: BoundaryParam, s: f64) -> f64 {
    let h = 1e-5;
    let [a, b] = param.0;
    let at = |a: f64, b: f64| geom.offset(&geom.frame(BoundaryParam([a, b])), s);
    let da = (at(a + h, b) - at(a - h, b)) / (2.0 * h);
    if D == 2 {
        return da.norm();
    }
    let db = (at(a, b + h) - at(a, b - h)) / (2.0 * h);
    let c = [
        da[1] * db[2] - da[2] * db[1],
        da[2] * db[0] - da[0] * db[2],
        da[0] * db[1] - da[1] * db[0],
    ];
    (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt()
}

/// `|Ω_ε|` as `∮∫₀^ε J(s)/J(0) ds dS`, with the Jacobian ratio of the
/// normal offset map.
pub fn layer_measure<G: Boundary<D> + ?Sized, const D: usize>(geom: &G, grid: &QuadratureGrid<D>, eps: f64) -> f64 {
    let rule = GaussLegendre::new(6);
    let mut total = 0.0;
    for (param, w) in grid.params.iter().zip(&grid.weights) {
        let base = parallel_element(geom, *param, 0.0);
        let depth: f64 = rule
            .on_interval(0.0, eps)
            .map(|(s, ws)| ws * parallel_element(geom, *param, s) / base)
            .sum();
        total += w * depth;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Curve, Surface};

    #[test]
    fn heart_layer_nodes_are_inside_and_in_layer() {
        let heart = Curve::heart();
        let set = layer_nodes(&heart, 0.1, 256, 3).unwrap();
        assert_eq!(set.len(), 256);
        for p in &set.nodes {
            assert!(heart.contains(p));
            assert!(heart.distance(p) <= 0.1 + 1e-10);
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let heart = Curve::heart();
        let a = layer_nodes(&heart, 0.1, 64, 11).unwrap();
        let b = layer_nodes(&heart, 0.1, 64, 11).unwrap();
        assert_eq!(a, b);
        let c = layer_nodes(&heart, 0.1, 64, 12).unwrap();
        assert_ne!(a.nodes, c.nodes);
    }

    #[test]
    fn single_node_near_inradius() {
        let disk = Curve::circle(1.0);
        let set = layer_nodes(&disk, 0.999, 1, 0).unwrap();
        assert!(disk.contains(&set.nodes[0]));
    }

    #[test]
    fn pinched_ball_layer() {
        let pb = Surface::pinched_ball();
        let set = layer_nodes(&pb, 1.0 / 12.0, 840, 7).unwrap();
        assert_eq!(set.len(), 840);
        assert!(set.nodes.iter().all(|p| pb.contains(p)));
        assert!(set.depths.iter().all(|&d| d <= 1.0 / 12.0 + 1e-12));
    }

    #[test]
    fn rejects_bad_parameters() {
        let disk = Curve::circle(1.0);
        assert!(layer_nodes(&disk, 0.0, 4, 0).is_err());
        assert!(layer_nodes(&disk, 0.1, 0, 0).is_err());
    }

    #[test]
    fn layer_measure_of_disk_annulus() {
        let c = Curve::circle(1.0);
        let g = c.quadrature(64);
        let exact = std::f64::consts::PI * (1.0 - 0.81);
        assert!((layer_measure(&c, &g, 0.1) - exact).abs() < 1e-8);
        let s = Surface::sphere(1.0);
        let g = s.quadrature(16);
        let exact = 4.0 / 3.0 * std::f64::consts::PI * (1.0 - 0.9f64.powi(3));
        assert!((layer_measure(&s, &g, 0.1) - exact).abs() < 1e-6);
    }
}
