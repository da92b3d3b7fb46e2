//! Boundary sampling of spheres, simplex meshes, and the arc-length bounds
//! that enter the finite-point certificate.

mod hull;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result};

/// Relative tolerance for "this point lies on the sphere".
pub const ON_SPHERE_TOL: f64 = 1e-8;

/// Points on the sphere `|x - center| = radius`, optionally with a simplex
/// mesh over them.
#[derive(Debug, Clone)]
pub struct SamplingMesh {
    pub dimension: usize,
    pub center: DVector<f64>,
    pub radius: f64,
    pub points: Vec<DVector<f64>>,
    /// `dimension`-tuples of point indices; empty until [`triangulate`] runs.
    pub faces: Vec<Vec<usize>>,
    /// Largest geodesic distance between two vertices of a common face.
    pub d_a: Option<f64>,
    pub seed: u64,
}

impl SamplingMesh {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_triangulated(&self) -> bool {
        !self.faces.is_empty() && self.d_a.is_some()
    }

    /// Maps the mesh onto the sphere of `radius` about `center`. Faces carry
    /// over unchanged and `d_a` scales linearly with the radius.
    pub fn rescaled(&self, center: &DVector<f64>, radius: f64) -> Result<SamplingMesh> {
        if !(radius > 0.0) || center.len() != self.dimension {
            return Err(Error::InvalidArgument(format!(
                "cannot rescale a {}-dimensional mesh to radius {radius}",
                self.dimension
            )));
        }
        let ratio = radius / self.radius;
        let points = self
            .points
            .iter()
            .map(|p| center + (p - &self.center) * ratio)
            .collect();
        Ok(SamplingMesh {
            dimension: self.dimension,
            center: center.clone(),
            radius,
            points,
            faces: self.faces.clone(),
            d_a: self.d_a.map(|d| d * ratio),
            seed: self.seed,
        })
    }

    /// Index of the first face whose cone from the center contains `direction`,
    /// i.e. the ray `center + θ·direction` crosses that face.
    pub fn face_hit_by_ray(&self, direction: &DVector<f64>) -> Option<usize> {
        let n = self.dimension;
        self.faces.iter().position(|face| {
            let mut m = DMatrix::<f64>::zeros(n, n);
            for (j, &v) in face.iter().enumerate() {
                m.set_column(j, &(&self.points[v] - &self.center));
            }
            match m.lu().solve(direction) {
                Some(lambda) => lambda.iter().all(|&l| l >= -1e-12) && lambda.sum() > 0.0,
                None => false,
            }
        })
    }

    /// Largest pairwise geodesic distance among the vertices of each face.
    pub fn max_face_arc(&self) -> Result<f64> {
        let mut worst = 0.0f64;
        for face in &self.faces {
            for (a, &i) in face.iter().enumerate() {
                for &j in &face[a + 1..] {
                    let d = geodesic_distance(&self.points[i], &self.points[j], &self.center, self.radius)?;
                    worst = worst.max(d);
                }
            }
        }
        Ok(worst)
    }
}

/// `N_p` points on the sphere of `radius` about `center`.
///
/// * `n = 2`: equally spaced angles starting at angle 0 (the seed is ignored).
/// * `n = 3`: spherical Fibonacci lattice under a seeded random rotation.
/// * `n > 3`: seeded Gaussian directions, normalized.
pub fn sample_sphere(
    n: usize,
    n_points: usize,
    center: &DVector<f64>,
    radius: f64,
    seed: u64,
) -> Result<SamplingMesh> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("dimension must be >= 2, got {n}")));
    }
    if n_points < n + 1 {
        return Err(Error::InvalidArgument(format!(
            "need at least n + 1 = {} points for a simplex, got {n_points}",
            n + 1
        )));
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {radius}")));
    }
    if center.len() != n {
        return Err(Error::Dimension(format!("center has {} coordinates, expected {n}", center.len())));
    }

    let directions: Vec<DVector<f64>> = match n {
        2 => (0..n_points)
            .map(|k| {
                let angle = 2.0 * PI * k as f64 / n_points as f64;
                DVector::from_vec(vec![angle.cos(), angle.sin()])
            })
            .collect(),
        3 => {
            let rotation = random_rotation(3, seed);
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..n_points)
                .map(|i| {
                    let z = 1.0 - (2.0 * i as f64 + 1.0) / n_points as f64;
                    let rho = (1.0 - z * z).max(0.0).sqrt();
                    let theta = golden * i as f64;
                    &rotation * DVector::from_vec(vec![rho * theta.cos(), rho * theta.sin(), z])
                })
                .collect()
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n_points).map(|_| gaussian_direction(n, &mut rng)).collect()
        }
    };

    let points = directions
        .into_iter()
        .map(|d| center + d.normalize() * radius)
        .collect();
    Ok(SamplingMesh {
        dimension: n,
        center: center.clone(),
        radius,
        points,
        faces: Vec::new(),
        d_a: None,
        seed,
    })
}

fn gaussian_direction(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
        let norm: f64 = v.norm();
        if norm > 1e-9 {
            return v / norm;
        }
    }
}

/// Uniformly random orthogonal matrix (Gram-Schmidt on Gaussian columns).
fn random_rotation(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = DMatrix::<f64>::zeros(n, n);
    let mut j = 0;
    while j < n {
        let mut v = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        for k in 0..j {
            let proj = q.column(k).dot(&v);
            v -= q.column(k) * proj;
        }
        let norm = v.norm();
        if norm > 1e-6 {
            q.set_column(j, &(v / norm));
            j += 1;
        }
    }
    q
}

/// Builds the boundary mesh: a closed polygon for `n = 2`, convex-hull facets
/// for `n >= 3` (for cospherical points this is the spherical Delaunay
/// triangulation). Meshes for `n > 3` are experimental.
pub fn triangulate(mut mesh: SamplingMesh) -> Result<SamplingMesh> {
    let n = mesh.dimension;
    if mesh.points.len() < n + 1 {
        return Err(Error::DegenerateHull(format!("{} points for dimension {n}", mesh.points.len())));
    }
    mesh.faces = if n == 2 {
        let mut order: Vec<(f64, usize)> = mesh
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| ((p[1] - mesh.center[1]).atan2(p[0] - mesh.center[0]), i))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in order.windows(2) {
            if w[1].0 - w[0].0 <= 1e-15 {
                return Err(Error::DegenerateHull("duplicate sample angles".into()));
            }
        }
        let count = order.len();
        (0..count).map(|k| vec![order[k].1, order[(k + 1) % count].1]).collect()
    } else {
        hull::convex_hull(&mesh.points)?
    };

    // the center must sit strictly inside the hull, otherwise some rays miss
    let mean = mesh.points.iter().fold(DVector::zeros(n), |acc, p| acc + p) / mesh.points.len() as f64;
    for face in &mesh.faces {
        let base = &mesh.points[face[0]];
        let mut m = DMatrix::<f64>::zeros(n, n);
        for (j, &v) in face.iter().enumerate().skip(1) {
            m.set_column(j - 1, &((&mesh.points[v] - base) / mesh.radius));
        }
        m.set_column(n - 1, &((&mesh.center - base) / mesh.radius));
        let side_center = m.determinant();
        m.set_column(n - 1, &((&mean - base) / mesh.radius));
        let side_mean = m.determinant();
        if side_center.abs() < 1e-14 || side_center * side_mean <= 0.0 {
            return Err(Error::DegenerateHull("the samples do not enclose the center".into()));
        }
    }
    if n == 2 {
        let max_gap = mesh.max_face_arc()?;
        if max_gap >= PI * mesh.radius {
            return Err(Error::DegenerateHull("samples leave a half circle uncovered".into()));
        }
    }

    mesh.d_a = Some(mesh.max_face_arc()?);
    Ok(mesh)
}

/// Arc length between two points of the sphere `|x - center| = radius`.
pub fn geodesic_distance(
    x: &DVector<f64>,
    y: &DVector<f64>,
    center: &DVector<f64>,
    radius: f64,
) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {radius}")));
    }
    if x.len() != center.len() || y.len() != center.len() {
        return Err(Error::Dimension("geodesic_distance arguments differ in length".into()));
    }
    for p in [x, y] {
        let norm = (p - center).norm();
        if (norm - radius).abs() > ON_SPHERE_TOL * radius {
            return Err(Error::OffSphere { point: p.iter().copied().collect(), norm, radius });
        }
    }
    let cos = ((x - center) / radius).dot(&((y - center) / radius));
    Ok(radius * cos.clamp(-1.0, 1.0).acos())
}

/// Largest admissible `d_a` for a minimal `(n + 1)`-vertex simplex covering of
/// a sphere of radius `r_c` in ℝⁿ: `2 r_c asin(√((n+1)/(2n)))`.
pub fn d_m_n(n: usize, r_c: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("n must be >= 2, got {n}")));
    }
    if !(r_c > 0.0) || !r_c.is_finite() {
        return Err(Error::InvalidArgument(format!("r_c must be positive, got {r_c}")));
    }
    let n = n as f64;
    Ok(2.0 * r_c * ((n + 1.0) / (2.0 * n)).sqrt().asin())
}

/// The three-dimensional tetrahedral bound `2 r_c asin(√(3/4)) = 2π r_c / 3`.
///
/// This is larger than [`d_m_n`]`(3, r_c)`; the general formula is the one used
/// as a gate.
pub fn d_m_tetrahedral(r_c: f64) -> Result<f64> {
    if !(r_c > 0.0) || !r_c.is_finite() {
        return Err(Error::InvalidArgument(format!("r_c must be positive, got {r_c}")));
    }
    Ok(2.0 * r_c * 0.75f64.sqrt().asin())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn origin(n: usize) -> DVector<f64> {
        DVector::zeros(n)
    }

    fn mesh_from(points: Vec<Vec<f64>>) -> SamplingMesh {
        let n = points[0].len();
        SamplingMesh {
            dimension: n,
            center: origin(n),
            radius: 1.0,
            points: points.into_iter().map(DVector::from_vec).collect(),
            faces: Vec::new(),
            d_a: None,
            seed: 0,
        }
    }

    #[test]
    fn circle_samples_are_equally_spaced() {
        let m = sample_sphere(2, 4, &origin(2), 1.0, 99).unwrap();
        let expected = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        for (p, e) in m.points.iter().zip(expected) {
            assert!((p[0] - e[0]).abs() < 1e-15 && (p[1] - e[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn fibonacci_points_have_unit_norm() {
        let m = sample_sphere(3, 100, &origin(3), 1.0, 3).unwrap();
        assert_eq!(m.len(), 100);
        assert!(m.points.iter().all(|p| (p.norm() - 1.0).abs() < 1e-10));
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let c = DVector::from_vec(vec![0.5, -1.0, 2.0, 0.0]);
        let a = sample_sphere(4, 50, &c, 2.0, 11).unwrap();
        let b = sample_sphere(4, 50, &c, 2.0, 11).unwrap();
        assert_eq!(a.points, b.points);
        let other = sample_sphere(4, 50, &c, 2.0, 12).unwrap();
        assert_ne!(a.points, other.points);
        assert!(a.points.iter().all(|p| ((p - &c).norm() - 2.0).abs() <= 1e-10 * 2.0));
    }

    #[test]
    fn too_few_points_rejected() {
        assert!(sample_sphere(3, 3, &origin(3), 1.0, 0).is_err());
        assert!(sample_sphere(2, 2, &origin(2), 1.0, 0).is_err());
        assert!(sample_sphere(3, 4, &origin(3), 0.0, 0).is_err());
    }

    #[test]
    fn regular_tetrahedron_mesh() {
        let s = 1.0 / 3f64.sqrt();
        let m = triangulate(mesh_from(vec![
            vec![s, s, s],
            vec![s, -s, -s],
            vec![-s, s, -s],
            vec![-s, -s, s],
        ]))
        .unwrap();
        assert_eq!(m.faces.len(), 4);
        // pairwise dot product of the vertices is -1/3
        assert_relative_eq!(m.d_a.unwrap(), (-1.0f64 / 3.0).acos(), epsilon = 1e-12);
        assert_relative_eq!(m.d_a.unwrap(), 1.910633, epsilon = 1e-6);
    }

    #[test]
    fn octahedron_mesh() {
        let mut pts = Vec::new();
        for k in 0..3 {
            for s in [1.0, -1.0] {
                let mut v = vec![0.0; 3];
                v[k] = s;
                pts.push(v);
            }
        }
        let m = triangulate(mesh_from(pts)).unwrap();
        assert_eq!(m.faces.len(), 8);
        assert_relative_eq!(m.d_a.unwrap(), PI / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn square_polygon() {
        let m = triangulate(mesh_from(vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![-1.0, 0.0],
            vec![0.0, -1.0],
        ]))
        .unwrap();
        assert_eq!(m.faces.len(), 4);
        assert_relative_eq!(m.d_a.unwrap(), PI / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn hemisphere_cloud_is_rejected() {
        // all points in the upper half: the center is outside their hull
        let pts = vec![
            vec![1.0f64, 0.0, 0.1],
            vec![-0.5, 0.8, 0.2],
            vec![-0.5, -0.8, 0.3],
            vec![0.0, 0.0, 1.0],
        ];
        let pts = pts
            .into_iter()
            .map(|v| {
                let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                v.into_iter().map(|x| x / n).collect()
            })
            .collect();
        assert!(matches!(triangulate(mesh_from(pts)), Err(Error::DegenerateHull(_))));
    }

    #[test]
    fn geodesic_examples() {
        let o = origin(3);
        let x = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let y = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        assert_eq!(geodesic_distance(&x, &x, &o, 1.0).unwrap(), 0.0);
        assert_relative_eq!(geodesic_distance(&x, &(-&x), &o, 1.0).unwrap(), PI, epsilon = 1e-15);
        assert_relative_eq!(geodesic_distance(&x, &y, &o, 1.0).unwrap(), PI / 2.0, epsilon = 1e-15);
        let off = DVector::from_vec(vec![1.1, 0.0, 0.0]);
        assert!(matches!(geodesic_distance(&x, &off, &o, 1.0), Err(Error::OffSphere { .. })));
    }

    #[test]
    fn d_m_values() {
        assert_relative_eq!(d_m_n(3, 1.0).unwrap(), 2.0 * (2.0f64 / 3.0).sqrt().asin(), epsilon = 1e-15);
        assert_relative_eq!(d_m_n(3, 1.0).unwrap(), 1.9106332, epsilon = 1e-7);
        assert_relative_eq!(d_m_n(3, 0.5).unwrap(), 0.9553166, epsilon = 1e-7);
        assert_relative_eq!(d_m_tetrahedral(1.0).unwrap(), 2.0 * PI / 3.0, epsilon = 1e-12);
        assert!(d_m_n(2, 0.0).is_err());
        assert!(d_m_n(1, 1.0).is_err());
        let mut prev = f64::INFINITY;
        for n in 2..200 {
            let v = d_m_n(n, 1.0).unwrap();
            assert!(v < prev);
            assert!(v > PI / 2.0);
            prev = v;
        }
    }

    #[test]
    fn rescaling_scales_d_a() {
        let m = triangulate(sample_sphere(3, 64, &origin(3), 1.0, 1).unwrap()).unwrap();
        let c = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let s = m.rescaled(&c, 0.25).unwrap();
        assert_relative_eq!(s.d_a.unwrap(), 0.25 * m.d_a.unwrap(), epsilon = 1e-15);
        assert_relative_eq!(s.max_face_arc().unwrap(), s.d_a.unwrap(), epsilon = 1e-12);
        assert!(s.points.iter().all(|p| ((p - &c).norm() - 0.25).abs() < 1e-12));
    }
}
