use rayon::prelude::*;

use super::kdtree::{dist2, KdTree};
use super::PointCloud;

/// Fixed-radius neighbor lists. `j` is listed for `i` iff `j != i` and
/// `|x_i - x_j| <= cutoff`. Lists are sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborIndex {
    cutoff: f64,
    lists: Vec<Vec<usize>>,
}

impl NeighborIndex {
    pub fn build(cloud: &PointCloud, cutoff: f64) -> Self {
        assert!(cutoff > 0.0, "neighbor cutoff must be positive");
        let tree = KdTree::new(cloud.coords(), cloud.dim());
        let r2 = cutoff * cutoff;
        let lists = (0..cloud.len())
            .into_par_iter()
            .map(|i| {
                let mut out = Vec::new();
                tree.within(cloud.point(i), r2, &mut out);
                out.retain(|&j| j != i);
                out.sort_unstable();
                out
            })
            .collect();
        NeighborIndex { cutoff, lists }
    }

    /// O(N²) scan; used for high ambient dimension and as a test oracle.
    pub fn build_brute_force(cloud: &PointCloud, cutoff: f64) -> Self {
        assert!(cutoff > 0.0, "neighbor cutoff must be positive");
        let r2 = cutoff * cutoff;
        let n = cloud.len();
        let lists = (0..n)
            .into_par_iter()
            .map(|i| {
                let xi = cloud.point(i);
                (0..n).filter(|&j| j != i && dist2(xi, cloud.point(j)) <= r2).collect()
            })
            .collect();
        NeighborIndex { cutoff, lists }
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.lists[i]
    }

    pub fn num_pairs(&self) -> usize {
        self.lists.iter().map(Vec::len).sum::<usize>() / 2
    }
}

/// Component label per node and the component sizes, for an undirected graph
/// given as adjacency lists.
pub fn connected_components<F, I>(n: usize, adjacent: F) -> (Vec<usize>, Vec<usize>)
where
    F: Fn(usize) -> I,
    I: IntoIterator<Item = usize>,
{
    let mut label = vec![usize::MAX; n];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for seed in 0..n {
        if label[seed] != usize::MAX {
            continue;
        }
        let c = sizes.len();
        let mut size = 0;
        label[seed] = c;
        stack.push(seed);
        while let Some(i) = stack.pop() {
            size += 1;
            for j in adjacent(i) {
                if label[j] == usize::MAX {
                    label[j] = c;
                    stack.push(j);
                }
            }
        }
        sizes.push(size);
    }
    (label, sizes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pair(distance: f64) -> PointCloud {
        PointCloud::new(2, 1, vec![0.0, 0.0, distance, 0.0], vec![1.0, 1.0], vec![], vec![]).unwrap()
    }

    #[test]
    fn cutoff_below_distance() {
        let idx = NeighborIndex::build(&pair(1.0), 0.5);
        assert!(idx.neighbors(0).is_empty() && idx.neighbors(1).is_empty());
    }

    #[test]
    fn cutoff_is_inclusive() {
        let idx = NeighborIndex::build(&pair(1.0), 1.0);
        assert_eq!(idx.neighbors(0), &[1]);
        assert_eq!(idx.neighbors(1), &[0]);
    }

    #[test]
    fn tree_matches_brute_force_in_high_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dim = 7;
        let n = 150;
        let coords: Vec<f64> = (0..n * dim).map(|_| rng.gen()).collect();
        let cloud = PointCloud::new(dim, 2, coords, vec![1.0; n], vec![], vec![]).unwrap();
        assert_eq!(
            NeighborIndex::build(&cloud, 0.8),
            NeighborIndex::build_brute_force(&cloud, 0.8)
        );
    }

    #[test]
    fn components_of_two_cliques() {
        let adj = |i: usize| -> Vec<usize> {
            if i < 3 {
                (0..3).filter(|&j| j != i).collect()
            } else {
                vec![]
            }
        };
        let (label, sizes) = connected_components(5, adj);
        assert_eq!(sizes, vec![3, 1, 1]);
        assert_eq!(label[0], label[2]);
    }
}
