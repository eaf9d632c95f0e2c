//! Brute-force nearest-neighbour search and the k-NN classifier backend.

use serde::{Deserialize, Serialize};

use crate::data::sq_dist;

/// Indices of the `k` nearest rows of `data` to `query`, ascending by
/// distance with ties broken by the lower index. `exclude` removes one row
/// (the query itself when it is a member of `data`).
pub fn k_nearest(data: &[Vec<f64>], query: &[f64], k: usize, exclude: Option<usize>) -> Vec<usize> {
    let mut dists: Vec<(f64, usize)> = data
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != exclude)
        .map(|(i, row)| (sq_dist(row, query), i))
        .collect();
    dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    dists.truncate(k);
    dists.into_iter().map(|(_, i)| i).collect()
}

/// All-pairs k-nearest-neighbour lists for a point set (self excluded).
/// `lists[i]` is ascending by distance; `kth_dist[i]` is the distance to the
/// k-th neighbour (used for reverse-neighbour membership tests).
pub struct NeighbourGraph {
    pub lists: Vec<Vec<usize>>,
    pub kth_dist: Vec<f64>,
}

impl NeighbourGraph {
    pub fn build(data: &[Vec<f64>], k: usize) -> NeighbourGraph {
        let lists: Vec<Vec<usize>> = crate::par::map_range(data.len(), |i| {
            k_nearest(data, &data[i], k, Some(i))
        });
        let kth_dist = lists
            .iter()
            .enumerate()
            .map(|(i, l)| {
                l.last()
                    .map(|&j| sq_dist(&data[i], &data[j]).sqrt())
                    .unwrap_or(f64::INFINITY)
            })
            .collect();
        NeighbourGraph { lists, kth_dist }
    }
}

/// Fitted state of the k-NN classifier: the scaled training matrix, labels
/// and neighbour count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnnBackend {
    pub train: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub k: usize,
    pub n_classes: usize,
}

impl KnnBackend {
    /// Vote fractions over classes among the `k` nearest training rows.
    pub fn predict_proba(&self, scaled: &[f64]) -> Vec<f64> {
        let k = self.k.min(self.train.len());
        let nn = k_nearest(&self.train, scaled, k, None);
        let mut votes = vec![0.0; self.n_classes];
        for &i in &nn {
            votes[self.labels[i]] += 1.0;
        }
        let total: f64 = votes.iter().sum();
        votes.iter_mut().for_each(|v| *v /= total);
        votes
    }
}
