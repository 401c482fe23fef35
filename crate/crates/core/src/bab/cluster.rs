//! Parameter-space partitioning for branching: k-means over flattened
//! network parameters (L2 distance), with k picked by the elbow rule
//! (maximum second difference of the within-cluster SSE), and a balanced
//! fallback split when clustering degenerates.

use rand::Rng;

use crate::nn::Network;
use crate::rng::{labels, substream};

#[derive(Debug, Clone)]
pub struct ClusterConfig {
    /// k is searched in `[2, min(k_max, |S|)]`.
    pub k_max: usize,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            k_max: 10,
            max_iterations: 100,
            seed: 0,
        }
    }
}

/// Partition networks (keyed by dataset index) into at least two disjoint,
/// nonempty subsets. Deterministic given the config seed. Clusters are
/// ordered by their smallest member index.
pub fn partition(members: &[(usize, &Network)], config: &ClusterConfig) -> Vec<Vec<usize>> {
    assert!(members.len() >= 2, "partition needs at least two members");
    let vectors: Vec<Vec<f64>> = members.iter().map(|(_, n)| n.flat_params()).collect();
    let keys: Vec<usize> = members.iter().map(|(i, _)| *i).collect();
    let n = vectors.len();

    let k_hi = config.k_max.min(n).max(2);
    // SSE for k in 1..=min(n, k_hi + 1); k beyond n is a perfect split with
    // SSE 0 for the purpose of the second difference.
    let mut rng = substream(config.seed, labels::CLUSTER);
    let mut sse = vec![0.0; k_hi + 2];
    let mut assignments: Vec<Vec<usize>> = vec![Vec::new(); k_hi + 2];
    sse[1] = total_sse(&vectors);
    assignments[1] = vec![0; n];
    for k in 2..=k_hi.min(n).max(2).min(n) {
        let (assign, err) = kmeans(&vectors, k, config.max_iterations, &mut rng);
        sse[k] = err;
        assignments[k] = assign;
    }
    let upper = (k_hi + 1).min(n);
    if upper > k_hi {
        let (assign, err) = kmeans(&vectors, upper, config.max_iterations, &mut rng);
        sse[upper] = err;
        assignments[upper] = assign;
    }

    let sse_at = |k: usize| -> f64 {
        if k > n {
            0.0
        } else {
            sse[k]
        }
    };
    let mut chosen = 2;
    let mut best_d2 = f64::NEG_INFINITY;
    for k in 2..=k_hi {
        let d2 = sse_at(k - 1) - 2.0 * sse_at(k) + sse_at(k + 1);
        if d2 > best_d2 + 1e-12 {
            best_d2 = d2;
            chosen = k;
        }
    }

    let mut clusters: Vec<Vec<usize>> = vec![Vec::new(); chosen];
    for (point, &cluster) in assignments[chosen].iter().enumerate() {
        clusters[cluster].push(keys[point]);
    }
    clusters.retain(|c| !c.is_empty());
    clusters.sort_by_key(|c| c[0]);

    if clusters.len() < 2 {
        return fallback_split(&vectors, &keys);
    }
    clusters
}

/// Balanced 2-way split by distance to the overall centroid, ties by index.
/// Fires when k-means collapses (e.g. all parameter vectors identical).
fn fallback_split(vectors: &[Vec<f64>], keys: &[usize]) -> Vec<Vec<usize>> {
    let centroid = mean(vectors);
    let mut order: Vec<usize> = (0..vectors.len()).collect();
    order.sort_by(|&a, &b| {
        dist2(&vectors[a], &centroid)
            .total_cmp(&dist2(&vectors[b], &centroid))
            .then(keys[a].cmp(&keys[b]))
    });
    let half = vectors.len() / 2;
    let mut first: Vec<usize> = order[..half].iter().map(|&i| keys[i]).collect();
    let mut second: Vec<usize> = order[half..].iter().map(|&i| keys[i]).collect();
    first.sort_unstable();
    second.sort_unstable();
    let mut out = vec![first, second];
    out.sort_by_key(|c| c[0]);
    out
}

fn kmeans(
    vectors: &[Vec<f64>],
    k: usize,
    max_iterations: usize,
    rng: &mut impl Rng,
) -> (Vec<usize>, f64) {
    let n = vectors.len();
    debug_assert!(k <= n);
    let mut centroids = init_plus_plus(vectors, k, rng);
    let mut assign = vec![0usize; n];
    for _ in 0..max_iterations {
        let mut changed = false;
        for (i, v) in vectors.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, centroid) in centroids.iter().enumerate() {
                let d = dist2(v, centroid);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let cluster: Vec<&Vec<f64>> = vectors
                .iter()
                .enumerate()
                .filter(|(i, _)| assign[*i] == c)
                .map(|(_, v)| v)
                .collect();
            if !cluster.is_empty() {
                for (d, slot) in centroid.iter_mut().enumerate() {
                    *slot = cluster.iter().map(|v| v[d]).sum::<f64>() / cluster.len() as f64;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let err = vectors
        .iter()
        .enumerate()
        .map(|(i, v)| dist2(v, &centroids[assign[i]]))
        .sum();
    (assign, err)
}

/// k-means++ seeding: subsequent centroids drawn with probability
/// proportional to squared distance from the nearest chosen centroid.
fn init_plus_plus(vectors: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let n = vectors.len();
    let mut chosen: Vec<usize> = vec![rng.random_range(0..n)];
    while chosen.len() < k {
        let d2: Vec<f64> = (0..n)
            .map(|i| {
                chosen
                    .iter()
                    .map(|&c| dist2(&vectors[i], &vectors[c]))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            // All remaining points coincide with a centroid; take the first
            // unchosen index so k centroids always exist.
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
    }
    chosen.iter().map(|&i| vectors[i].clone()).collect()
}

fn mean(vectors: &[Vec<f64>]) -> Vec<f64> {
    let mut m = vec![0.0; vectors[0].len()];
    for v in vectors {
        for (slot, x) in m.iter_mut().zip(v) {
            *slot += x;
        }
    }
    for slot in &mut m {
        *slot /= vectors.len() as f64;
    }
    m
}

fn total_sse(vectors: &[Vec<f64>]) -> f64 {
    let m = mean(vectors);
    vectors.iter().map(|v| dist2(v, &m)).sum()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Architecture, Layer};

    fn net_with_params(shift: f64, noise: &mut impl Rng, spread: f64) -> Network {
        let arch = Architecture::new(vec![1, 2, 2]).unwrap();
        let r = |rng: &mut dyn rand::RngCore, base: f64| -> f64 {
            base + rng.random_range(-spread..=spread)
        };
        let layers = vec![
            Layer {
                weights: vec![vec![r(noise, shift)], vec![r(noise, shift)]],
                bias: vec![r(noise, shift), r(noise, shift)],
            },
            Layer {
                weights: vec![vec![r(noise, shift), 0.0], vec![0.0, r(noise, shift)]],
                bias: vec![r(noise, shift), r(noise, shift)],
            },
        ];
        Network::new(arch, layers).unwrap()
    }

    #[test]
    fn elbow_recovers_a_planted_two_way_partition() {
        let mut rng = substream(5, "cluster-test");
        // Two groups with centers 10 apart and noise 0.01.
        let group_a: Vec<Network> = (0..4).map(|_| net_with_params(0.0, &mut rng, 0.01)).collect();
        let group_b: Vec<Network> = (0..3).map(|_| net_with_params(10.0, &mut rng, 0.01)).collect();
        let members: Vec<(usize, &Network)> =
            group_a.iter().chain(group_b.iter()).enumerate().collect();
        let parts = partition(&members, &ClusterConfig::default());
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0], vec![0, 1, 2, 3]);
        assert_eq!(parts[1], vec![4, 5, 6]);
    }

    #[test]
    fn identical_networks_fall_back_to_balanced_split() {
        let mut rng = substream(6, "cluster-test");
        let net = net_with_params(1.0, &mut rng, 0.0);
        let members: Vec<(usize, &Network)> = (0..5).map(|i| (i * 3, &net)).collect();
        let parts = partition(&members, &ClusterConfig::default());
        assert_eq!(parts.len(), 2);
        let total: usize = parts.iter().map(Vec::len).sum();
        assert_eq!(total, 5);
        assert!(parts.iter().all(|p| !p.is_empty()));
        // Balanced within one element.
        assert!((parts[0].len() as i64 - parts[1].len() as i64).abs() <= 1);
    }

    #[test]
    fn two_members_force_two_singletons() {
        let mut rng = substream(7, "cluster-test");
        let a = net_with_params(0.0, &mut rng, 0.1);
        let b = net_with_params(2.0, &mut rng, 0.1);
        let members = vec![(4usize, &a), (9usize, &b)];
        let parts = partition(&members, &ClusterConfig::default());
        assert_eq!(parts, vec![vec![4], vec![9]]);
    }

    #[test]
    fn partition_is_deterministic() {
        let mut rng = substream(8, "cluster-test");
        let nets: Vec<Network> = (0..6).map(|i| net_with_params(i as f64, &mut rng, 0.2)).collect();
        let members: Vec<(usize, &Network)> = nets.iter().enumerate().collect();
        let cfg = ClusterConfig {
            seed: 42,
            ..ClusterConfig::default()
        };
        assert_eq!(partition(&members, &cfg), partition(&members, &cfg));
    }
}
