//! Approximate neighbor search with random-projection trees.
//!
//! Each tree splits the gallery recursively by the hyperplane equidistant
//! from two randomly picked points. A query walks all trees best-first by
//! hyperplane margin until `search_k` candidates are collected, then ranks
//! the candidates exactly.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{top_k, Gallery, Neighbor};
use crate::error::Result;
use crate::rng::keyed_rng;
use crate::scalar::{cmp_scalar, Scalar};

#[derive(Debug, Clone)]
enum Node<T> {
    Leaf(Vec<usize>),
    Split {
        normal: Vec<T>,
        offset: T,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
pub struct RandomProjectionForest<T> {
    nodes: Vec<Node<T>>,
    roots: Vec<usize>,
    leaf_size: usize,
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&u, &v)| acc + u * v)
}

struct Pending<T> {
    priority: T,
    node: usize,
}

impl<T: Scalar> PartialEq for Pending<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<T: Scalar> Eq for Pending<T> {}
impl<T: Scalar> PartialOrd for Pending<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Scalar> Ord for Pending<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        cmp_scalar(self.priority, other.priority).then(other.node.cmp(&self.node))
    }
}

impl<T: Scalar> RandomProjectionForest<T> {
    pub fn build(gallery: &Gallery<T>, n_trees: usize, leaf_size: usize, seed: u64) -> Self {
        let mut forest = RandomProjectionForest {
            nodes: Vec::new(),
            roots: Vec::with_capacity(n_trees),
            leaf_size: leaf_size.max(1),
        };
        for tree in 0..n_trees {
            let mut rng = keyed_rng(seed, &[0x7472, tree as u64]);
            let items: Vec<usize> = (0..gallery.len()).collect();
            let root = forest.split(gallery, items, &mut rng);
            forest.roots.push(root);
        }
        forest
    }

    fn split(&mut self, gallery: &Gallery<T>, mut items: Vec<usize>, rng: &mut ChaCha8Rng) -> usize {
        if items.len() <= self.leaf_size {
            self.nodes.push(Node::Leaf(items));
            return self.nodes.len() - 1;
        }
        let entries = gallery.entries();
        let a = &entries[items[rng.random_range(0..items.len())]].embedding;
        let b = &entries[items[rng.random_range(0..items.len())]].embedding;
        let normal: Vec<T> = a.iter().zip(b).map(|(&u, &v)| u - v).collect();
        let half = T::of(0.5);
        let mid: Vec<T> = a.iter().zip(b).map(|(&u, &v)| half * (u + v)).collect();
        let offset = dot(&normal, &mid);
        let (mut left, mut right): (Vec<usize>, Vec<usize>) = items
            .iter()
            .partition(|&&i| dot(&normal, &entries[i].embedding) - offset <= T::zero());
        if left.is_empty() || right.is_empty() {
            // Degenerate plane (duplicate points): split at random.
            items.shuffle(rng);
            let mid = items.len() / 2;
            right = items.split_off(mid);
            left = items;
        }
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf(Vec::new()));
        let l = self.split(gallery, left, rng);
        let r = self.split(gallery, right, rng);
        self.nodes[slot] = Node::Split {
            normal,
            offset,
            left: l,
            right: r,
        };
        slot
    }

    /// Approximate k-NN; inspects at least `search_k` gallery items when available.
    pub fn query<'a>(
        &self,
        gallery: &'a Gallery<T>,
        query: &[T],
        k: usize,
        exclude_video: Option<i64>,
        search_k: usize,
    ) -> Result<Vec<Neighbor<'a, T>>> {
        gallery.check_query(query)?;
        let mut heap: BinaryHeap<Pending<T>> = self
            .roots
            .iter()
            .map(|&node| Pending {
                priority: T::infinity(),
                node,
            })
            .collect();
        let mut seen = vec![false; gallery.len()];
        let mut candidates = Vec::new();
        while let Some(Pending { priority, node }) = heap.pop() {
            if candidates.len() >= search_k {
                break;
            }
            match &self.nodes[node] {
                Node::Leaf(items) => {
                    for &i in items {
                        if !seen[i] {
                            seen[i] = true;
                            candidates.push(i);
                        }
                    }
                }
                Node::Split { normal, offset, left, right } => {
                    let margin = dot(normal, query) - *offset;
                    heap.push(Pending { priority: priority.min(-margin), node: *left });
                    heap.push(Pending { priority: priority.min(margin), node: *right });
                }
            }
        }
        let metric = gallery.metric();
        let entries = gallery.entries();
        let all = candidates
            .into_iter()
            .map(|i| &entries[i])
            .filter(|e| Some(e.video_id) != exclude_video)
            .map(|e| Neighbor {
                entry: e,
                distance: metric.distance(query, &e.embedding),
            })
            .collect();
        Ok(top_k(all, k))
    }
}
