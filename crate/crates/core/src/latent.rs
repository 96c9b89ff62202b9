//! Latent-space geometry: PCA to two dimensions, cluster quality per key
//! (Davies-Bouldin, Dunn), centroid angles, and a circular Kendall's Tau
//! that scores how faithfully the key clusters trace the circle of fifths.
//!
//! Tau works on cyclic order alone: every one of the C(12,3) = 220 key
//! triples is oriented inside the reference fifths cycle and inside the
//! measured angles, and tau is (concordant - discordant) / 220. Orientation
//! of (x, y, z) is positive when y is reached strictly before z walking
//! counter-clockwise from x. +1 means the exact fifths circle, -1 its
//! mirror image, and both survive any global rotation of the space.

// Indexed loops mirror the matrix algebra; wrap-around angle checks are not
// interval membership.
#![allow(clippy::needless_range_loop)]
#![allow(clippy::manual_range_contains)]

use std::collections::BTreeMap;

use crate::score::{KeyLabel, Mode, CAMELOT_TONICS};

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error("degenerate data: {0}")]
    DegenerateData(&'static str),
    #[error("tied angles for {0} and {1}")]
    TiedAngles(KeyLabel, KeyLabel),
}

/// One embedded segment.
#[derive(Debug, Clone)]
pub struct LatentPoint {
    pub piece_id: String,
    pub segment_index: usize,
    pub key: KeyLabel,
    pub mu: Vec<f64>,
    pub xy: Option<(f64, f64)>,
}

/// Per-piece summary of the latent space, one row of the results table.
#[derive(Debug, Clone)]
pub struct LatentReport {
    pub piece_id: String,
    pub davies_bouldin: f64,
    pub davies_bouldin_degenerate: bool,
    pub dunn: f64,
    pub tau: f64,
    pub centroid_angles: BTreeMap<KeyLabel, f64>,
    pub explained_variance: [f64; 2],
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// (eigenvalues, eigenvectors as columns), unsorted.
fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| f64::from(i == j)).collect())
        .collect();
    let scale: f64 = a
        .iter()
        .flat_map(|r| r.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(1e-300);
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| a[p][q] * a[p][q])
            .sum::<f64>()
            .sqrt();
        if off < 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let values = (0..n).map(|i| a[i][i]).collect();
    (values, v)
}

/// Projects the points onto the top two principal axes of their mean-
/// centered covariance (population normalization), filling `xy`, and
/// returns the two explained variances. The sign convention, first nonzero
/// loading positive, makes the projection deterministic.
pub fn pca2(points: &mut [LatentPoint]) -> Result<[f64; 2], MetricError> {
    if points.len() < 3 {
        return Err(MetricError::DegenerateData("fewer than 3 points"));
    }
    let dim = points[0].mu.len();
    if dim < 2 || points.iter().any(|p| p.mu.len() != dim) {
        return Err(MetricError::DegenerateData("latent dims disagree or < 2"));
    }
    let n = points.len() as f64;
    let mut mean = vec![0.0; dim];
    for p in points.iter() {
        for (m, &x) in mean.iter_mut().zip(&p.mu) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let centered: Vec<Vec<f64>> = points
        .iter()
        .map(|p| p.mu.iter().zip(&mean).map(|(&x, &m)| x - m).collect())
        .collect();
    let mut cov = vec![vec![0.0; dim]; dim];
    for row in &centered {
        for i in 0..dim {
            if row[i] == 0.0 {
                continue;
            }
            for j in i..dim {
                cov[i][j] += row[i] * row[j];
            }
        }
    }
    for i in 0..dim {
        for j in i..dim {
            cov[i][j] /= n;
            cov[j][i] = cov[i][j];
        }
    }
    if cov.iter().all(|r| r.iter().all(|&x| x == 0.0)) {
        return Err(MetricError::DegenerateData("zero covariance"));
    }

    let (values, vectors) = jacobi_eigen(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    let axes: Vec<Vec<f64>> = order[..2]
        .iter()
        .map(|&k| {
            let mut axis: Vec<f64> = (0..dim).map(|i| vectors[i][k]).collect();
            if let Some(first) = axis.iter().find(|x| x.abs() > 1e-12) {
                if *first < 0.0 {
                    for x in axis.iter_mut() {
                        *x = -*x;
                    }
                }
            }
            axis
        })
        .collect();

    for (p, row) in points.iter_mut().zip(&centered) {
        let x: f64 = axes[0].iter().zip(row).map(|(a, b)| a * b).sum();
        let y: f64 = axes[1].iter().zip(row).map(|(a, b)| a * b).sum();
        p.xy = Some((x, y));
    }
    Ok([values[order[0]].max(0.0), values[order[1]].max(0.0)])
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

fn centroid(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let (sx, sy) = points
        .iter()
        .fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    (sx / n, sy / n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DaviesBouldin {
    pub score: f64,
    /// Two centroids coincided; the score is meaningless (infinite).
    pub coincident_centroids: bool,
}

/// Mean over clusters of the worst (s_i + s_j) / d(c_i, c_j) ratio, with
/// scatter s = mean distance to centroid. Lower is better separated.
pub fn davies_bouldin(groups: &BTreeMap<KeyLabel, Vec<(f64, f64)>>) -> DaviesBouldin {
    assert!(groups.len() >= 2, "need at least two clusters");
    let stats: Vec<((f64, f64), f64)> = groups
        .values()
        .map(|pts| {
            let c = centroid(pts);
            let s = pts.iter().map(|&p| dist(p, c)).sum::<f64>() / pts.len() as f64;
            (c, s)
        })
        .collect();
    let mut coincident = false;
    let mut total = 0.0;
    for (i, &(ci, si)) in stats.iter().enumerate() {
        let mut worst = 0.0f64;
        for (j, &(cj, sj)) in stats.iter().enumerate() {
            if i == j {
                continue;
            }
            let d = dist(ci, cj);
            if d == 0.0 {
                coincident = true;
                worst = f64::INFINITY;
            } else {
                worst = worst.max((si + sj) / d);
            }
        }
        total += worst;
    }
    DaviesBouldin {
        score: total / stats.len() as f64,
        coincident_centroids: coincident,
    }
}

/// min over cluster pairs of single-linkage distance, divided by the
/// largest mean pairwise intra-cluster distance. Higher is better.
pub fn dunn_index(groups: &BTreeMap<KeyLabel, Vec<(f64, f64)>>) -> f64 {
    assert!(groups.len() >= 2, "need at least two clusters");
    let clusters: Vec<&Vec<(f64, f64)>> = groups.values().collect();
    let mut max_intra = 0.0f64;
    for pts in &clusters {
        if pts.len() < 2 {
            continue;
        }
        let mut sum = 0.0;
        let mut count = 0usize;
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                sum += dist(pts[i], pts[j]);
                count += 1;
            }
        }
        max_intra = max_intra.max(sum / count as f64);
    }
    let mut min_inter = f64::INFINITY;
    for i in 0..clusters.len() {
        for j in (i + 1)..clusters.len() {
            for &a in clusters[i] {
                for &b in clusters[j] {
                    min_inter = min_inter.min(dist(a, b));
                }
            }
        }
    }
    if max_intra == 0.0 {
        return f64::INFINITY;
    }
    min_inter / max_intra
}

/// Angle of each key's centroid around the mean of the centroids, in
/// [0, 2π). Using the centroid mean (not the point mean) keeps uneven
/// cluster sizes from dragging the hub.
pub fn centroid_angles(
    groups: &BTreeMap<KeyLabel, Vec<(f64, f64)>>,
) -> Result<BTreeMap<KeyLabel, f64>, MetricError> {
    let centroids: BTreeMap<KeyLabel, (f64, f64)> = groups
        .iter()
        .map(|(&k, pts)| (k, centroid(pts)))
        .collect();
    let hub = centroid(&centroids.values().copied().collect::<Vec<_>>());
    if centroids.values().all(|&c| dist(c, hub) < 1e-12) {
        return Err(MetricError::DegenerateData("all centroids coincident"));
    }
    Ok(centroids
        .into_iter()
        .map(|(k, c)| {
            let angle = (c.1 - hub.1).atan2(c.0 - hub.0);
            (k, angle.rem_euclid(std::f64::consts::TAU))
        })
        .collect())
}

/// +1 when walking counter-clockwise from x meets y strictly before z.
fn orientation(x: f64, y: f64, z: f64, period: f64) -> f64 {
    let dy = (y - x).rem_euclid(period);
    let dz = (z - x).rem_euclid(period);
    if dy < dz {
        1.0
    } else {
        -1.0
    }
}

/// Circular Kendall's Tau between a reference cyclic key order and measured
/// angles. Exact angle ties are broken by nudging the key that comes later
/// in the reference by +1e-9 radians.
pub fn circular_kendall_tau(
    reference: &[KeyLabel],
    angles: &BTreeMap<KeyLabel, f64>,
) -> Result<f64, MetricError> {
    let n = reference.len();
    assert!(n >= 3, "a cycle needs at least three keys");
    let mut resolved: Vec<f64> = Vec::with_capacity(n);
    for key in reference {
        let raw = *angles
            .get(key)
            .ok_or(MetricError::DegenerateData("missing key angle"))?;
        let mut angle = raw;
        let mut nudges = 0;
        while resolved.contains(&angle) {
            angle += 1e-9;
            nudges += 1;
            if nudges > n {
                let clash = reference[resolved.iter().position(|&a| a == raw).unwrap()];
                return Err(MetricError::TiedAngles(clash, *key));
            }
        }
        resolved.push(angle);
    }

    let tau_period = 2.0 * std::f64::consts::PI;
    let mut sum = 0.0;
    let mut triples = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                let ref_orient = orientation(i as f64, j as f64, k as f64, n as f64);
                let ang_orient = orientation(resolved[i], resolved[j], resolved[k], tau_period);
                sum += ref_orient * ang_orient;
                triples += 1.0;
            }
        }
    }
    Ok(sum / triples)
}

/// The fifths cycle as the Camelot wheel numbers it: B first, E last.
pub fn camelot_order(mode: Mode) -> Vec<KeyLabel> {
    CAMELOT_TONICS
        .iter()
        .map(|&pc| KeyLabel::new(pc, mode))
        .collect()
}
