//! Dimension-generic quickhull.
//!
//! Facets are stored with their `d` vertices and `d` neighbours, where
//! `neighbors[i]` is the facet sharing the ridge opposite `vertices[i]`.
//! Points within `eps` of a facet plane are treated as not visible, so
//! near-coplanar points may be left out of the vertex set.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

struct Facet {
    vertices: Vec<usize>,
    neighbors: Vec<usize>,
    normal: DVector<f64>,
    offset: f64,
    outside: Vec<usize>,
    alive: bool,
}

impl Facet {
    fn distance(&self, p: &DVector<f64>) -> f64 {
        self.normal.dot(p) - self.offset
    }
}

/// Unit normal and offset of the hyperplane through `d` points, oriented so
/// that `interior` lies strictly below it.
fn hyperplane(
    points: &[DVector<f64>],
    vertices: &[usize],
    interior: &DVector<f64>,
) -> Result<(DVector<f64>, f64)> {
    let d = interior.len();
    let base = &points[vertices[0]];
    let mut edges = DMatrix::<f64>::zeros(d - 1, d);
    for (r, &v) in vertices[1..].iter().enumerate() {
        edges.set_row(r, &(&points[v] - base).transpose());
    }
    // generalized cross product: cofactors of the (d-1) x d edge matrix
    let mut normal = DVector::<f64>::zeros(d);
    for k in 0..d {
        let minor = edges.clone().remove_column(k);
        let det = if d == 2 { minor[(0, 0)] } else { minor.determinant() };
        normal[k] = if k % 2 == 0 { det } else { -det };
    }
    let norm = normal.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::DegenerateHull("facet with zero-area normal".into()));
    }
    normal /= norm;
    let mut offset = normal.dot(base);
    if normal.dot(interior) - offset > 0.0 {
        normal = -normal;
        offset = -offset;
    }
    Ok((normal, offset))
}

/// Picks `d + 1` affinely independent points by greedy farthest-from-span selection.
fn initial_simplex(points: &[DVector<f64>], eps: f64) -> Result<Vec<usize>> {
    let d = points[0].len();
    let origin = &points[0];
    let first = (0..points.len())
        .max_by(|&a, &b| {
            let da = (&points[a] - origin).norm();
            let db = (&points[b] - origin).norm();
            da.total_cmp(&db)
        })
        .unwrap();
    let mut chosen = vec![0usize, first];
    if (&points[first] - origin).norm() <= eps {
        return Err(Error::DegenerateHull("all points coincide".into()));
    }
    let mut basis: Vec<DVector<f64>> = vec![(&points[first] - origin).normalize()];
    while chosen.len() < d + 1 {
        let mut best = (0usize, -1.0f64);
        for (i, p) in points.iter().enumerate() {
            let mut r = p - origin;
            for b in &basis {
                let proj = b.dot(&r);
                r -= b * proj;
            }
            let dist = r.norm();
            if dist > best.1 {
                best = (i, dist);
            }
        }
        if best.1 <= eps {
            return Err(Error::DegenerateHull(format!(
                "point cloud spans only {} dimensions",
                basis.len()
            )));
        }
        let mut r = &points[best.0] - origin;
        for b in &basis {
            let proj = b.dot(&r);
            r -= b * proj;
        }
        basis.push(r.normalize());
        chosen.push(best.0);
    }
    Ok(chosen)
}

/// Returns the facets of the convex hull of `points` as vertex-index tuples.
pub(crate) fn convex_hull(points: &[DVector<f64>]) -> Result<Vec<Vec<usize>>> {
    let Some(first) = points.first() else {
        return Err(Error::DegenerateHull("no points".into()));
    };
    let d = first.len();
    if d < 2 {
        return Err(Error::InvalidArgument("hull needs dimension >= 2".into()));
    }
    if points.len() < d + 1 {
        return Err(Error::DegenerateHull(format!(
            "{} points cannot span a {d}-simplex",
            points.len()
        )));
    }
    let centroid = points.iter().fold(DVector::zeros(d), |acc, p| acc + p) / points.len() as f64;
    let scale = points
        .iter()
        .map(|p| (p - &centroid).norm())
        .fold(0.0, f64::max);
    let eps = 1e-12 * scale.max(f64::MIN_POSITIVE);

    let simplex = initial_simplex(points, eps * 1e3)?;
    let interior = simplex.iter().fold(DVector::zeros(d), |acc, &i| acc + &points[i]) / (d + 1) as f64;

    let mut facets: Vec<Facet> = Vec::new();
    for skip in 0..=d {
        let vertices: Vec<usize> = (0..=d).filter(|&k| k != skip).map(|k| simplex[k]).collect();
        // neighbour opposite simplex vertex k is the facet that skips k
        let neighbors: Vec<usize> = (0..=d).filter(|&k| k != skip).collect();
        let (normal, offset) = hyperplane(points, &vertices, &interior)?;
        facets.push(Facet { vertices, neighbors, normal, offset, outside: Vec::new(), alive: true });
    }

    let mut in_simplex = vec![false; points.len()];
    for &s in &simplex {
        in_simplex[s] = true;
    }
    for (i, p) in points.iter().enumerate() {
        if in_simplex[i] {
            continue;
        }
        if let Some(f) = facets.iter_mut().find(|f| f.distance(p) > eps) {
            f.outside.push(i);
        }
    }

    let mut pending: Vec<usize> = (0..facets.len()).filter(|&f| !facets[f].outside.is_empty()).collect();
    let mut visible_mark: Vec<u32> = vec![0; facets.len()];
    let mut round: u32 = 0;

    while let Some(fid) = pending.pop() {
        if !facets[fid].alive || facets[fid].outside.is_empty() {
            continue;
        }
        round += 1;
        let apex = *facets[fid]
            .outside
            .iter()
            .max_by(|&&a, &&b| facets[fid].distance(&points[a]).total_cmp(&facets[fid].distance(&points[b])))
            .unwrap();
        let p = &points[apex];

        // visible region by flood fill
        let mut visible = vec![fid];
        visible_mark.resize(facets.len(), 0);
        visible_mark[fid] = round;
        let mut head = 0;
        while head < visible.len() {
            let v = visible[head];
            head += 1;
            for k in 0..d {
                let nb = facets[v].neighbors[k];
                if visible_mark[nb] != round && facets[nb].distance(p) > eps {
                    visible_mark[nb] = round;
                    visible.push(nb);
                }
            }
        }

        // cone of new facets over the horizon
        let mut new_ids = Vec::new();
        let mut ridge_map: HashMap<Vec<usize>, (usize, usize)> = HashMap::new();
        for &v in &visible {
            for k in 0..d {
                let nb = facets[v].neighbors[k];
                if visible_mark[nb] == round {
                    continue;
                }
                let mut vertices: Vec<usize> = facets[v]
                    .vertices
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != k)
                    .map(|(_, &x)| x)
                    .collect();
                vertices.push(apex);
                let (normal, offset) = hyperplane(points, &vertices, &interior)?;
                let new_id = facets.len();
                let mut neighbors = vec![usize::MAX; d];
                neighbors[d - 1] = nb;
                let slot = facets[nb].neighbors.iter().position(|&x| x == v).unwrap();
                facets[nb].neighbors[slot] = new_id;
                for j in 0..d - 1 {
                    let mut key: Vec<usize> = vertices[..d - 1]
                        .iter()
                        .enumerate()
                        .filter(|&(i, _)| i != j)
                        .map(|(_, &x)| x)
                        .collect();
                    key.sort_unstable();
                    if let Some((other, other_slot)) = ridge_map.remove(&key) {
                        neighbors[j] = other;
                        facets[other].neighbors[other_slot] = new_id;
                    } else {
                        ridge_map.insert(key, (new_id, j));
                    }
                }
                facets.push(Facet { vertices, neighbors, normal, offset, outside: Vec::new(), alive: true });
                new_ids.push(new_id);
            }
        }
        if !ridge_map.is_empty() {
            return Err(Error::DegenerateHull("horizon is not a closed ridge cycle".into()));
        }

        for &v in &visible {
            facets[v].alive = false;
            let orphans = std::mem::take(&mut facets[v].outside);
            for q in orphans {
                if q == apex {
                    continue;
                }
                if let Some(&nf) = new_ids.iter().find(|&&nf| facets[nf].distance(&points[q]) > eps) {
                    facets[nf].outside.push(q);
                }
            }
        }
        for &nf in &new_ids {
            if !facets[nf].outside.is_empty() {
                pending.push(nf);
            }
        }
    }

    Ok(facets.into_iter().filter(|f| f.alive).map(|f| f.vertices).collect())
}
