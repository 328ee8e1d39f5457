//! Static k-d tree over a flat coordinate buffer with runtime dimension.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const LEAF_SIZE: usize = 16;

#[inline]
pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
pub struct KdTree<'a> {
    dim: usize,
    coords: &'a [f64],
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then_with(|| self.1.cmp(&other.1))
    }
}

impl<'a> KdTree<'a> {
    pub fn new(coords: &'a [f64], dim: usize) -> Self {
        assert!(dim > 0 && coords.len() % dim == 0);
        let n = coords.len() / dim;
        let mut tree = KdTree {
            dim,
            coords,
            order: (0..n).collect(),
            nodes: Vec::new(),
        };
        if n > 0 {
            tree.build(0, n);
        }
        tree
    }

    #[inline]
    fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut best_axis = 0;
        let mut best_spread = -1.0;
        for axis in 0..self.dim {
            let (lo, hi) = self.order[start..end]
                .iter()
                .map(|&i| self.coords[i * self.dim + axis])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            if hi - lo > best_spread {
                best_spread = hi - lo;
                best_axis = axis;
            }
        }
        if best_spread <= 0.0 {
            // all points coincide
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let (dim, coords) = (self.dim, self.coords);
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            coords[a * dim + best_axis].total_cmp(&coords[b * dim + best_axis])
        });
        let value = coords[self.order[mid] * dim + best_axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split {
            axis: best_axis,
            value,
            left,
            right,
        };
        id
    }

    /// All indices with squared distance `<= radius2` from `query`, unsorted.
    pub fn within(&self, query: &[f64], radius2: f64, out: &mut Vec<usize>) {
        if self.nodes.is_empty() {
            return;
        }
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            match self.nodes[id] {
                Node::Leaf { start, end } => {
                    for &i in &self.order[start..end] {
                        if dist2(self.point(i), query) <= radius2 {
                            out.push(i);
                        }
                    }
                }
                Node::Split {
                    axis,
                    value,
                    left,
                    right,
                } => {
                    let d = query[axis] - value;
                    // left holds coordinates <= value, right holds >= value
                    if d <= 0.0 || d * d <= radius2 {
                        stack.push(left);
                    }
                    if d >= 0.0 || d * d <= radius2 {
                        stack.push(right);
                    }
                }
            }
        }
    }

    /// The `k` nearest neighbors of `query` as `(dist2, index)` sorted ascending,
    /// skipping index `skip` when given.
    pub fn nearest(&self, query: &[f64], k: usize, skip: Option<usize>) -> Vec<(f64, usize)> {
        let mut heap: BinaryHeap<HeapItem> = BinaryHeap::with_capacity(k + 1);
        if k == 0 || self.nodes.is_empty() {
            return Vec::new();
        }
        self.nearest_rec(0, query, k, skip, &mut heap);
        let mut out: Vec<(f64, usize)> = heap.into_iter().map(|h| (h.0, h.1)).collect();
        out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out
    }

    fn nearest_rec(&self, id: usize, query: &[f64], k: usize, skip: Option<usize>, heap: &mut BinaryHeap<HeapItem>) {
        match self.nodes[id] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if Some(i) == skip {
                        continue;
                    }
                    let d = dist2(self.point(i), query);
                    if heap.len() < k {
                        heap.push(HeapItem(d, i));
                    } else if d < heap.peek().map_or(f64::INFINITY, |h| h.0) {
                        heap.pop();
                        heap.push(HeapItem(d, i));
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let d = query[axis] - value;
                let (near, far) = if d <= 0.0 { (left, right) } else { (right, left) };
                self.nearest_rec(near, query, k, skip, heap);
                let worst = if heap.len() < k {
                    f64::INFINITY
                } else {
                    heap.peek().map_or(f64::INFINITY, |h| h.0)
                };
                if d * d <= worst {
                    self.nearest_rec(far, query, k, skip, heap);
                }
            }
        }
    }
}
