//! Minimal 3D kd-tree for nearest-neighbor queries over point samples.

use crate::geom::{self, Vec3};

struct Node {
    point: Vec3,
    index: usize,
    axis: usize,
    left: Option<Box<Node>>,
    right: Option<Box<Node>>,
}

pub struct KdTree {
    root: Option<Box<Node>>,
}

impl KdTree {
    pub fn build(points: &[Vec3]) -> Self {
        let mut items: Vec<(Vec3, usize)> =
            points.iter().copied().zip(0..points.len()).collect();
        Self { root: build_node(&mut items, 0) }
    }

    /// Index of and distance to the nearest stored point. Returns `None`
    /// only for an empty tree.
    pub fn nearest(&self, query: Vec3) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        if let Some(root) = &self.root {
            search(root, query, &mut best);
        }
        best.map(|(i, d2)| (i, d2.sqrt()))
    }
}

fn build_node(items: &mut [(Vec3, usize)], depth: usize) -> Option<Box<Node>> {
    if items.is_empty() {
        return None;
    }
    let axis = depth % 3;
    let mid = items.len() / 2;
    items.select_nth_unstable_by(mid, |a, b| a.0[axis].total_cmp(&b.0[axis]));
    let (point, index) = items[mid];
    let (lo, hi) = items.split_at_mut(mid);
    Some(Box::new(Node {
        point,
        index,
        axis,
        left: build_node(lo, depth + 1),
        right: build_node(&mut hi[1..], depth + 1),
    }))
}

fn search(node: &Node, query: Vec3, best: &mut Option<(usize, f64)>) {
    let d2 = geom::dist_sq(node.point, query);
    if best.map_or(true, |(_, b)| d2 < b) {
        *best = Some((node.index, d2));
    }
    let diff = query[node.axis] - node.point[node.axis];
    let (near, far) = if diff < 0.0 {
        (&node.left, &node.right)
    } else {
        (&node.right, &node.left)
    };
    if let Some(n) = near {
        search(n, query, best);
    }
    if let Some(f) = far {
        if best.map_or(true, |(_, b)| diff * diff < b) {
            search(f, query, best);
        }
    }
}
