use serde::{Deserialize, Serialize};

use super::matrix::{squared_distance, Matrix};
use super::rng::RngStream;
use super::NumError;

pub const KMEANS_MAX_ITER: usize = 300;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansFit {
    pub centers: Matrix,
    pub labels: Vec<usize>,
    /// Sum of squared distances to the assigned center after each assignment step.
    pub objective_trace: Vec<f64>,
}

impl KMeansFit {
    /// Final value of the objective.
    pub fn objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(f64::INFINITY)
    }

    pub fn predict(&self, points: &Matrix) -> Vec<usize> {
        points
            .row_iter()
            .map(|p| nearest(&self.centers, p).0)
            .collect()
    }
}

/// Index of and squared distance to the nearest center (lowest index on ties).
pub fn nearest(centers: &Matrix, p: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.row_iter().enumerate() {
        let d = squared_distance(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

pub fn kmeans_fit(points: &Matrix, k: usize, rng: &mut RngStream) -> Result<KMeansFit, NumError> {
    kmeans_fit_with(points, k, rng, KMEANS_MAX_ITER)
}

/// Best of `restarts` independent runs by final objective (first wins ties).
pub fn kmeans_fit_best_of(
    points: &Matrix,
    k: usize,
    rng: &mut RngStream,
    restarts: usize,
) -> Result<KMeansFit, NumError> {
    let mut best = kmeans_fit(points, k, rng)?;
    for _ in 1..restarts {
        let fit = kmeans_fit(points, k, rng)?;
        if fit.objective() < best.objective() {
            best = fit;
        }
    }
    Ok(best)
}

/// Lloyd's algorithm with k-means++ seeding.
///
/// A cluster that loses all its points is re-seeded with the point that is
/// farthest from its current center (taken from a cluster with at least two
/// members), so every returned center owns at least one point.
pub fn kmeans_fit_with(
    points: &Matrix,
    k: usize,
    rng: &mut RngStream,
    max_iter: usize,
) -> Result<KMeansFit, NumError> {
    let n = points.rows();
    if k == 0 {
        return Err(NumError::InvalidInput("k must be at least 1".into()));
    }
    if k > n {
        return Err(NumError::InvalidInput(format!(
            "cannot form {k} clusters from {n} points"
        )));
    }
    let mut centers = plus_plus_seeds(points, k, rng);
    let mut labels = vec![usize::MAX; n];
    let mut objective_trace = Vec::new();
    for _ in 0..max_iter.max(1) {
        let mut changed = false;
        let mut objective = 0.0;
        let mut dist = vec![0.0; n];
        for (i, p) in points.row_iter().enumerate() {
            let (j, d) = nearest(&centers, p);
            if labels[i] != j {
                labels[i] = j;
                changed = true;
            }
            dist[i] = d;
            objective += d;
        }
        objective -= repair_empty(points, &mut centers, &mut labels, &mut dist, k);
        objective_trace.push(objective);
        if !changed && objective_trace.len() > 1 {
            break;
        }
        centers = cluster_means(points, &labels, k, &centers);
    }
    Ok(KMeansFit {
        centers,
        labels,
        objective_trace,
    })
}

fn plus_plus_seeds(points: &Matrix, k: usize, rng: &mut RngStream) -> Matrix {
    let n = points.rows();
    let mut chosen = vec![rng.below(n)];
    let mut d2: Vec<f64> = points
        .row_iter()
        .map(|p| squared_distance(p, points.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            rng.categorical(&d2)
        } else {
            // every remaining point coincides with a seed
            (0..n).find(|i| !chosen.contains(i)).unwrap()
        };
        chosen.push(next);
        for (i, p) in points.row_iter().enumerate() {
            d2[i] = d2[i].min(squared_distance(p, points.row(next)));
        }
    }
    points.select_rows(&chosen)
}

/// Returns how much the objective dropped.
fn repair_empty(
    points: &Matrix,
    centers: &mut Matrix,
    labels: &mut [usize],
    dist: &mut [f64],
    k: usize,
) -> f64 {
    let mut drop = 0.0;
    loop {
        let mut counts = vec![0usize; k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return drop;
        };
        let far = (0..labels.len())
            .filter(|&i| counts[labels[i]] > 1)
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if dist[b] >= dist[i] => Some(b),
                _ => Some(i),
            })
            .expect("k <= n guarantees a donor cluster");
        log::debug!("k-means: re-seeding empty cluster {empty} with point {far}");
        centers.row_mut(empty).copy_from_slice(points.row(far));
        labels[far] = empty;
        drop += dist[far];
        dist[far] = 0.0;
    }
}

fn cluster_means(points: &Matrix, labels: &[usize], k: usize, previous: &Matrix) -> Matrix {
    let mut sums = Matrix::zeros(k, points.cols());
    let mut counts = vec![0usize; k];
    for (p, &l) in points.row_iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums.row_mut(l).iter_mut().zip(p) {
            *s += v;
        }
    }
    for (j, &count) in counts.iter().enumerate() {
        if count == 0 {
            sums.row_mut(j).copy_from_slice(previous.row(j));
        } else {
            sums.row_mut(j).iter_mut().for_each(|v| *v /= count as f64);
        }
    }
    sums
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted_centers(c: &Matrix) -> Vec<Vec<f64>> {
        let mut v: Vec<Vec<f64>> = c.row_iter().map(|r| r.to_vec()).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    #[test]
    fn separated_points_get_their_own_clusters() {
        let pts = Matrix::from_rows(&[[0.0, 0.0], [100.0, 0.0], [0.0, 100.0]]).unwrap();
        let fit = kmeans_fit(&pts, 3, &mut RngStream::new(1)).unwrap();
        let mut l = fit.labels.clone();
        l.sort();
        l.dedup();
        assert_eq!(l.len(), 3);
    }

    #[test]
    fn duplicated_data_gives_same_centers() {
        let mut rng = RngStream::new(4);
        let mut rows = Vec::new();
        for c in [[-10.0, 0.0], [10.0, 0.0], [0.0, 15.0]] {
            for _ in 0..20 {
                rows.push([c[0] + rng.normal(), c[1] + rng.normal()]);
            }
        }
        let once = Matrix::from_rows(&rows).unwrap();
        let twice_rows: Vec<[f64; 2]> = rows.iter().chain(rows.iter()).copied().collect();
        let twice = Matrix::from_rows(&twice_rows).unwrap();
        let a = kmeans_fit(&once, 3, &mut RngStream::new(2)).unwrap();
        let b = kmeans_fit(&twice, 3, &mut RngStream::new(3)).unwrap();
        for (x, y) in sorted_centers(&a.centers).iter().zip(sorted_centers(&b.centers)) {
            for (u, v) in x.iter().zip(y) {
                assert!((u - v).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn recovers_one_dimensional_mixture() {
        let mut rng = RngStream::new(8);
        let vals: Vec<f64> = (0..200)
            .map(|i| if i % 2 == 0 { -5.0 } else { 5.0 } + 0.5 * rng.normal())
            .collect();
        let pts = Matrix::from_vec(200, 1, vals).unwrap();
        let fit = kmeans_fit(&pts, 2, &mut RngStream::new(9)).unwrap();
        let c = sorted_centers(&fit.centers);
        assert!((c[0][0] + 5.0).abs() < 0.5);
        assert!((c[1][0] - 5.0).abs() < 0.5);
    }

    #[test]
    fn too_many_clusters_is_rejected() {
        let pts = Matrix::zeros(2, 1);
        assert!(kmeans_fit(&pts, 3, &mut RngStream::new(0)).is_err());
    }

    #[test]
    fn identical_points_still_fill_every_cluster() {
        let pts = Matrix::from_rows(&[[1.0], [1.0], [1.0], [1.0]]).unwrap();
        let fit = kmeans_fit(&pts, 3, &mut RngStream::new(0)).unwrap();
        for j in 0..3 {
            assert!(fit.labels.contains(&j));
        }
    }
}
