use nalgebra::{DMatrix, SymmetricEigen};

use crate::geometry::Centroid;
use crate::{Error, Result};

/// Pairwise cosine distances between unit centroids.
pub fn centroid_distances(centroids: &[Centroid]) -> Vec<Vec<f64>> {
    let k = centroids.len();
    let mut d = vec![vec![0.0; k]; k];
    for a in 0..k {
        for b in a + 1..k {
            let dot: f64 = centroids[a].values().iter().zip(centroids[b].values()).map(|(x, y)| x * y).sum();
            let v = (1.0 - dot).clamp(0.0, 1.0);
            d[a][b] = v;
            d[b][a] = v;
        }
    }
    d
}

/// Classical (Torgerson) scaling of a symmetric distance matrix into the plane.
///
/// Each axis is flipped so that its first coordinate of magnitude above 1e-12
/// is positive. When the double-centred matrix has rank below two, the
/// missing axis is zero.
pub fn classical_mds(distances: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
    let k = distances.len();
    if k < 2 {
        return Err(Error::InvalidArgument("scaling needs at least two points".into()));
    }
    if distances.iter().any(|r| r.len() != k) {
        return Err(Error::InvalidArgument("distance matrix is not square".into()));
    }
    let d2 = DMatrix::from_fn(k, k, |i, j| distances[i][j] * distances[i][j]);
    let row_means: Vec<f64> = (0..k).map(|i| d2.row(i).mean()).collect();
    let grand = d2.mean();
    let b = DMatrix::from_fn(k, k, |i, j| -0.5 * (d2[(i, j)] - row_means[i] - row_means[j] + grand));
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| {
        eig.eigenvalues[y]
            .partial_cmp(&eig.eigenvalues[x])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(x.cmp(&y))
    });
    let top = eig.eigenvalues[order[0]].max(0.0);
    let mut out = vec![[0.0; 2]; k];
    for axis in 0..2 {
        let idx = order[axis];
        let value = eig.eigenvalues[idx];
        if !(value > 1e-12 * top.max(1e-300)) {
            log::warn!("distance matrix has rank below {}; axis {axis} set to zero", axis + 1);
            continue;
        }
        let scale = value.sqrt();
        let v = eig.eigenvectors.column(idx);
        let flip = match v.iter().find(|x| x.abs() * scale > 1e-12) {
            Some(x) if *x < 0.0 => -1.0,
            _ => 1.0,
        };
        for i in 0..k {
            out[i][axis] = flip * v[i] * scale;
        }
    }
    Ok(out)
}

/// Two-dimensional layout of the centroids from their cosine distances.
pub fn mds_layout(centroids: &[Centroid]) -> Result<Vec<[f64; 2]>> {
    classical_mds(&centroid_distances(centroids))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(p: &[[f64; 2]]) -> Vec<Vec<f64>> {
        p.iter()
            .map(|a| p.iter().map(|b| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()).collect())
            .collect()
    }

    #[test]
    fn two_points_sit_at_half_distance() {
        let out = classical_mds(&[vec![0.0, 0.3], vec![0.3, 0.0]]).unwrap();
        assert!((out[0][0] - 0.15).abs() < 1e-12 && (out[1][0] + 0.15).abs() < 1e-12);
        assert_eq!(out[0][1], 0.0);
        assert_eq!(out[1][1], 0.0);
    }

    #[test]
    fn equilateral_triangle() {
        let d = vec![vec![0.0, 0.5, 0.5], vec![0.5, 0.0, 0.5], vec![0.5, 0.5, 0.0]];
        let out = classical_mds(&d).unwrap();
        let back = dist(&out);
        for a in 0..3 {
            for b in 0..3 {
                assert!((back[a][b] - d[a][b]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn planar_configuration_is_reproduced() {
        let pts = [[0.0, 0.0], [1.0, 0.2], [0.3, 0.9], [-0.4, 0.5], [0.7, -0.6]];
        let d = dist(&pts);
        let back = dist(&classical_mds(&d).unwrap());
        for a in 0..pts.len() {
            for b in 0..pts.len() {
                assert!((back[a][b] - d[a][b]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sign_convention() {
        let pts = [[0.0, 0.0], [1.0, 0.2], [0.3, 0.9], [-0.4, 0.5]];
        let out = classical_mds(&dist(&pts)).unwrap();
        for axis in 0..2 {
            let first = out.iter().map(|p| p[axis]).find(|x| x.abs() > 1e-12).unwrap();
            assert!(first > 0.0);
        }
    }

    #[test]
    fn permutation_only_reorders() {
        let pts = [[0.0, 0.0], [1.0, 0.2], [0.3, 0.9], [-0.4, 0.5]];
        let d = dist(&pts);
        let base = dist(&classical_mds(&d).unwrap());
        let perm = [2, 0, 3, 1];
        let dp: Vec<Vec<f64>> = perm.iter().map(|&a| perm.iter().map(|&b| d[a][b]).collect()).collect();
        let out = dist(&classical_mds(&dp).unwrap());
        for (i, &a) in perm.iter().enumerate() {
            for (j, &b) in perm.iter().enumerate() {
                assert!((out[i][j] - base[a][b]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn needs_two_points() {
        assert!(classical_mds(&[vec![0.0]]).is_err());
    }
}
