use super::Boundary;
use crate::Point;
use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use std::collections::HashMap;
use std::f64::consts::TAU;

/// Conforming simplex mesh of a star-shaped domain: triangles in 2D,
/// tetrahedra in 3D.
#[derive(Debug, Clone)]
pub struct SimplexMesh<const D: usize> {
    pub points: Vec<Point<D>>,
    /// Vertex indices, `D + 1` per simplex.
    pub simplices: Vec<usize>,
    pub measures: Vec<f64>,
}

impl<const D: usize> SimplexMesh<D> {
    pub fn len(&self) -> usize {
        self.measures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measures.is_empty()
    }

    pub fn simplex(&self, i: usize) -> &[usize] {
        &self.simplices[i * (D + 1)..(i + 1) * (D + 1)]
    }

    pub fn total_measure(&self) -> f64 {
        self.measures.iter().sum()
    }

    /// `Σ_l |S_l| · mean over the vertices of S_l of f`.
    pub fn integrate_vertex_values(&self, values: &[f64]) -> f64 {
        (0..self.len())
            .map(|l| self.measures[l] * self.simplex(l).iter().map(|&v| values[v]).sum::<f64>() / (D + 1) as f64)
            .sum()
    }
}

/// Rings of points `c + (k/rings) R(θ_j) x̂(θ_j)` joined by triangles, with
/// a fan around the centre.
pub fn star_mesh_2d(geom: &dyn Boundary<2>, rings: usize, angles: usize) -> SimplexMesh<2> {
    let c = geom.center();
    let dirs: Vec<Vector2<f64>> = (0..angles)
        .map(|j| {
            let a = TAU * j as f64 / angles as f64;
            Vector2::new(a.cos(), a.sin())
        })
        .collect();
    let extents: Vec<f64> = dirs.iter().map(|d| geom.radial_extent(d)).collect();
    let mut points = vec![c];
    for k in 1..=rings {
        for (d, r) in dirs.iter().zip(&extents) {
            points.push(c + d * (r * k as f64 / rings as f64));
        }
    }
    let idx = |k: usize, j: usize| 1 + (k - 1) * angles + j % angles;
    let mut simplices = Vec::new();
    for j in 0..angles {
        simplices.extend_from_slice(&[0, idx(1, j), idx(1, j + 1)]);
        for k in 1..rings {
            simplices.extend_from_slice(&[idx(k, j), idx(k + 1, j), idx(k + 1, j + 1)]);
            simplices.extend_from_slice(&[idx(k, j), idx(k + 1, j + 1), idx(k, j + 1)]);
        }
    }
    let measures = simplices
        .chunks(3)
        .map(|s| {
            let m = Matrix2::from_columns(&[points[s[1]] - points[s[0]], points[s[2]] - points[s[0]]]);
            0.5 * m.determinant().abs()
        })
        .collect();
    SimplexMesh {
        points,
        simplices,
        measures,
    }
}

/// Unit-sphere triangulation by `level` midpoint subdivisions of the
/// icosahedron.
pub fn icosphere(level: usize) -> (Vec<Vector3<f64>>, Vec<[usize; 3]>) {
    let p = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vector3<f64>> = [
        [-1.0, p, 0.0],
        [1.0, p, 0.0],
        [-1.0, -p, 0.0],
        [1.0, -p, 0.0],
        [0.0, -1.0, p],
        [0.0, 1.0, p],
        [0.0, -1.0, -p],
        [0.0, 1.0, -p],
        [p, 0.0, -1.0],
        [p, 0.0, 1.0],
        [-p, 0.0, -1.0],
        [-p, 0.0, 1.0],
    ]
    .iter()
    .map(|v| Vector3::from(*v).normalize())
    .collect();
    let mut faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vector3<f64>>| {
            let key = (a.min(b), a.max(b));
            *mid.entry(key).or_insert_with(|| {
                verts.push((verts[a] + verts[b]).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    (verts, faces)
}

/// Radial shells over an icosphere; each shell-face prism is split into
/// three tetrahedra with a consistent vertex order, so the mesh is
/// conforming.
pub fn star_mesh_3d(geom: &dyn Boundary<3>, rings: usize, level: usize) -> SimplexMesh<3> {
    let c = geom.center();
    let (dirs, faces) = icosphere(level);
    let extents: Vec<f64> = dirs.iter().map(|d| geom.radial_extent(d)).collect();
    let nd = dirs.len();
    let mut points = vec![c];
    for k in 1..=rings {
        for (d, r) in dirs.iter().zip(&extents) {
            points.push(c + d * (r * k as f64 / rings as f64));
        }
    }
    let idx = |k: usize, j: usize| if k == 0 { 0 } else { 1 + (k - 1) * nd + j };
    let mut simplices = Vec::new();
    for f in &faces {
        // sorting the face vertices makes neighbouring prisms split their
        // shared quadrilaterals the same way
        let mut s = *f;
        s.sort_unstable();
        let [a, b, cc] = s;
        simplices.extend_from_slice(&[0, idx(1, a), idx(1, b), idx(1, cc)]);
        for k in 1..rings {
            let (a0, b0, c0) = (idx(k, a), idx(k, b), idx(k, cc));
            let (a1, b1, c1) = (idx(k + 1, a), idx(k + 1, b), idx(k + 1, cc));
            simplices.extend_from_slice(&[a0, b0, c0, a1]);
            simplices.extend_from_slice(&[b0, c0, a1, b1]);
            simplices.extend_from_slice(&[c0, a1, b1, c1]);
        }
    }
    let measures = simplices
        .chunks(4)
        .map(|s| {
            let m = Matrix3::from_columns(&[
                points[s[1]] - points[s[0]],
                points[s[2]] - points[s[0]],
                points[s[3]] - points[s[0]],
            ]);
            m.determinant().abs() / 6.0
        })
        .collect();
    SimplexMesh {
        points,
        simplices,
        measures,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Curve, Surface};
    use std::f64::consts::PI;

    #[test]
    fn disk_area_converges() {
        let m = star_mesh_2d(&Curve::circle(1.0), 8, 256);
        // inscribed polygon area
        let poly = 0.5 * 256.0 * (TAU / 256.0).sin();
        assert!(
            (m.total_measure() - poly).abs() < 1e-9,
            "{} vs {poly}",
            m.total_measure()
        );
        assert!((m.total_measure() - PI).abs() < 1e-3);
    }

    #[test]
    fn ball_volume_converges() {
        let m = star_mesh_3d(&Surface::sphere(1.0), 4, 3);
        let v = m.total_measure();
        assert!((v - 4.0 * PI / 3.0).abs() < 0.02 * 4.0 * PI / 3.0, "{v}");
        let ones = vec![1.0; m.points.len()];
        assert!((m.integrate_vertex_values(&ones) - v).abs() < 1e-12);
    }

    #[test]
    fn icosphere_counts() {
        let (v, f) = icosphere(2);
        assert_eq!(f.len(), 320);
        assert_eq!(v.len(), 162);
    }
}
