//! Bounding-volume hierarchy built with a binned surface-area heuristic
//! and collapsed into a four-wide tree for traversal. Primitives are
//! referred to by index; the caller owns the geometry and supplies the
//! primitive intersection test at query time.

use std::mem::MaybeUninit;

use nalgebra::Vector3;

use super::geometry::{Aabb, Ray};

const BINS: usize = 16;
const MAX_LEAF: u32 = 8;
/// Cost of visiting a node relative to one primitive test, for SAH.
const TRAVERSAL_COST: f64 = 1.0;
const MAX_DEPTH: usize = 96;
const WIDTH: usize = 4;
const STACK: usize = (WIDTH - 1) * MAX_DEPTH + WIDTH + 1;
/// Relative slack on single-precision slab distances.
const SLACK: f32 = 1e-5;

/// Four child boxes in single precision, relative to the tree origin and
/// rounded outwards so that every box contains its exact counterpart.
#[derive(Debug, Clone)]
#[repr(C, align(64))]
struct WideNode {
    min: [[f32; WIDTH]; 3],
    max: [[f32; WIDTH]; 3],
    /// Child node index, or first slot for a leaf lane.
    child: [u32; WIDTH],
    /// Slot count of a leaf lane; zero for an interior child.
    count: [u32; WIDTH],
    lanes: u32,
}

impl WideNode {
    fn empty() -> Self {
        Self {
            min: [[0.0; WIDTH]; 3],
            max: [[0.0; WIDTH]; 3],
            child: [0; WIDTH],
            count: [0; WIDTH],
            lanes: 0,
        }
    }

    fn set_lane(&mut self, lane: usize, b: &Aabb, origin: &Vector3<f64>) {
        for a in 0..3 {
            self.min[a][lane] = round_down(b.min[a] - origin[a]);
            self.max[a][lane] = round_up(b.max[a] - origin[a]);
        }
    }
}

fn pad(v: f32) -> f32 {
    v.abs().max(1.0) * 1e-4
}

fn round_down(v: f64) -> f32 {
    let f = v as f32;
    let f = if f as f64 > v { f.next_down() } else { f };
    f - pad(f)
}

fn round_up(v: f64) -> f32 {
    let f = v as f32;
    let f = if (f as f64) < v { f.next_up() } else { f };
    f + pad(f)
}

/// Binary node used during construction.
#[derive(Debug, Clone, Copy)]
struct BuildNode {
    bounds: Aabb,
    /// First slot for leaves, left child otherwise (the right child follows).
    first: u32,
    count: u32,
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    index: u32,
    count: u32,
    t: f32,
}

/// Traversal stack. Left uninitialised because clearing it costs more than
/// a typical query.
struct Stack {
    buf: [MaybeUninit<Entry>; STACK],
    len: usize,
}

impl Stack {
    fn new(root: Entry) -> Self {
        let mut buf = [MaybeUninit::uninit(); STACK];
        buf[0].write(root);
        Self { buf, len: 1 }
    }

    #[inline]
    fn pop(&mut self) -> Option<Entry> {
        self.len = self.len.checked_sub(1)?;
        // SAFETY: every slot below `len` has been written.
        Some(unsafe { self.buf[self.len].assume_init() })
    }

    /// Inserts `e` among the entries pushed since `base`, keeping them
    /// sorted by decreasing distance.
    #[inline]
    fn push_sorted(&mut self, base: usize, e: Entry) {
        let mut k = self.len;
        // SAFETY: `base..len` have been written.
        while k > base && unsafe { self.buf[k - 1].assume_init() }.t < e.t {
            self.buf[k] = self.buf[k - 1];
            k -= 1;
        }
        self.buf[k].write(e);
        self.len += 1;
    }
}

#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<WideNode>,
    indices: Vec<u32>,
    depth: usize,
    bounds: Aabb,
    origin: Vector3<f64>,
}

impl Bvh {
    pub fn build(bounds: &[Aabb]) -> Self {
        let n = bounds.len();
        let mut indices: Vec<u32> = (0..n as u32).collect();
        if n == 0 {
            return Self {
                nodes: Vec::new(),
                indices,
                depth: 0,
                bounds: Aabb::empty(),
                origin: Vector3::zeros(),
            };
        }
        let centroids: Vec<Vector3<f64>> = bounds.iter().map(Aabb::centroid).collect();
        let root = bounds.iter().fold(Aabb::empty(), |acc, b| acc.union(b));
        let mut nodes = Vec::with_capacity(2 * n / MAX_LEAF as usize + 1);
        nodes.push(BuildNode {
            bounds: root,
            first: 0,
            count: n as u32,
        });

        let mut max_depth = 1;
        let mut stack = vec![(0usize, 1usize)];
        while let Some((ni, depth)) = stack.pop() {
            max_depth = max_depth.max(depth);
            let BuildNode {
                bounds: node_bounds,
                first,
                count,
            } = nodes[ni];
            if count <= 2 || depth >= MAX_DEPTH {
                continue;
            }
            let range = first as usize..(first + count) as usize;
            let Some(mid) = split(
                &mut indices[range.clone()],
                bounds,
                &centroids,
                &node_bounds,
            ) else {
                continue;
            };
            let (l, r) = indices[range].split_at(mid);
            let enclose = |ids: &[u32]| {
                ids.iter()
                    .fold(Aabb::empty(), |acc, &i| acc.union(&bounds[i as usize]))
            };
            let left = nodes.len();
            nodes.push(BuildNode {
                bounds: enclose(l),
                first,
                count: mid as u32,
            });
            nodes.push(BuildNode {
                bounds: enclose(r),
                first: first + mid as u32,
                count: count - mid as u32,
            });
            nodes[ni].first = left as u32;
            nodes[ni].count = 0;
            stack.push((left + 1, depth + 1));
            stack.push((left, depth + 1));
        }

        let origin = root.centroid();
        let mut wide = Vec::with_capacity(nodes.len() / 2 + 1);
        wide.push(WideNode::empty());
        if nodes[0].count > 0 {
            wide[0].set_lane(0, &root, &origin);
            wide[0].child[0] = 0;
            wide[0].count[0] = nodes[0].count;
            wide[0].lanes = 1;
        } else {
            collapse(&nodes, 0, 0, &mut wide, &origin);
        }
        Self {
            nodes: wide,
            indices,
            depth: max_depth,
            bounds: root,
            origin,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Exact bounds of all primitives.
    pub fn bounds(&self) -> Aabb {
        self.bounds
    }

    /// Depth of the binary tree the wide tree was collapsed from.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Primitive stored at leaf slot `slot`. Leaves reference contiguous
    /// slot ranges, so data laid out in slot order is read sequentially.
    #[inline]
    pub fn primitive(&self, slot: u32) -> u32 {
        self.indices[slot as usize]
    }

    /// Primitive indices in slot order.
    pub fn order(&self) -> &[u32] {
        &self.indices
    }

    /// Closest hit along `ray` within `t_max`, as `(slot, distance)`.
    ///
    /// `hit(slot, t_best)` must return the hit distance when the primitive
    /// at `slot` is intersected at a distance `<= t_best`.
    pub fn closest(
        &self,
        ray: &Ray,
        t_max: f64,
        mut hit: impl FnMut(u32, f64) -> Option<f64>,
    ) -> Option<(u32, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let o: [f32; 3] = std::array::from_fn(|a| (ray.origin[a] - self.origin[a]) as f32);
        let inv: [f32; 3] = std::array::from_fn(|a| ray.inv_direction[a] as f32);
        // Zero components carry +∞, so the sign alone picks the entry plane.
        let negative: [bool; 3] = std::array::from_fn(|a| inv[a] < 0.0);
        let mut best: Option<(u32, f64)> = None;
        let mut t_best = t_max;
        let mut limit = widen(t_best);
        let mut stack = Stack::new(Entry {
            index: 0,
            count: 0,
            t: 0.0,
        });
        while let Some(e) = stack.pop() {
            if e.t > limit {
                continue;
            }
            if e.count > 0 {
                for slot in e.index..e.index + e.count {
                    if let Some(t) = hit(slot, t_best) {
                        if t <= t_best {
                            t_best = t;
                            limit = widen(t);
                            best = Some((slot, t));
                        }
                    }
                }
                continue;
            }
            let node = &self.nodes[e.index as usize];
            let mut near = [0.0f32; WIDTH];
            let mut far = [limit; WIDTH];
            for a in 0..3 {
                let (entry, exit) = if negative[a] {
                    (&node.max[a], &node.min[a])
                } else {
                    (&node.min[a], &node.max[a])
                };
                for l in 0..WIDTH {
                    let lo = (entry[l] - o[a]) * inv[a];
                    let hi = (exit[l] - o[a]) * inv[a];
                    // Written so that a NaN bound never tightens the interval.
                    near[l] = if lo > near[l] { lo } else { near[l] };
                    far[l] = if hi < far[l] { hi } else { far[l] };
                }
            }
            // Push hits farthest first so the nearest is popped next.
            let base = stack.len;
            for l in 0..node.lanes as usize {
                if near[l] <= far[l] * (1.0 + SLACK) {
                    stack.push_sorted(
                        base,
                        Entry {
                            index: node.child[l],
                            count: node.count[l],
                            t: near[l],
                        },
                    );
                }
            }
        }
        best
    }
}

fn widen(t: f64) -> f32 {
    (t as f32) * (1.0 + SLACK) + SLACK
}

/// Fills wide node `wi` from binary interior node `bi` by repeatedly
/// opening the largest interior child until four children are gathered.
fn collapse(
    nodes: &[BuildNode],
    bi: usize,
    wi: usize,
    wide: &mut Vec<WideNode>,
    origin: &Vector3<f64>,
) {
    let first = nodes[bi].first as usize;
    let mut children = vec![first, first + 1];
    while children.len() < WIDTH {
        let open = children
            .iter()
            .enumerate()
            .filter(|(_, &c)| nodes[c].count == 0)
            .max_by(|(_, &a), (_, &b)| {
                nodes[a]
                    .bounds
                    .surface_area()
                    .total_cmp(&nodes[b].bounds.surface_area())
            });
        let Some((k, &c)) = open else {
            break;
        };
        let l = nodes[c].first as usize;
        children[k] = l;
        children.push(l + 1);
    }
    let mut node = WideNode::empty();
    node.lanes = children.len() as u32;
    let mut interior = Vec::new();
    for (lane, &c) in children.iter().enumerate() {
        node.set_lane(lane, &nodes[c].bounds, origin);
        if nodes[c].count > 0 {
            node.child[lane] = nodes[c].first;
            node.count[lane] = nodes[c].count;
        } else {
            node.child[lane] = wide.len() as u32;
            wide.push(WideNode::empty());
            interior.push((c, node.child[lane] as usize));
        }
    }
    wide[wi] = node;
    for (c, w) in interior {
        collapse(nodes, c, w, wide, origin);
    }
}

/// Partitions `ids` and returns the split point, or `None` to keep a leaf.
fn split(
    ids: &mut [u32],
    bounds: &[Aabb],
    centroids: &[Vector3<f64>],
    node: &Aabb,
) -> Option<usize> {
    let n = ids.len();
    let cb = Aabb::from_points(ids.iter().map(|&i| &centroids[i as usize]));
    let extent = cb.max - cb.min;

    let mut best: Option<(f64, usize, usize)> = None; // (cost, axis, bin)
    for axis in 0..3 {
        if !(extent[axis] > 0.0) {
            continue;
        }
        let scale = BINS as f64 / extent[axis];
        let bin_of = |i: u32| {
            (((centroids[i as usize][axis] - cb.min[axis]) * scale) as usize).min(BINS - 1)
        };
        let mut bin_bounds = [Aabb::empty(); BINS];
        let mut bin_counts = [0usize; BINS];
        for &i in ids.iter() {
            let b = bin_of(i);
            bin_bounds[b] = bin_bounds[b].union(&bounds[i as usize]);
            bin_counts[b] += 1;
        }
        let mut right_area = [0.0; BINS];
        let mut right_count = [0usize; BINS];
        let (mut acc, mut cnt) = (Aabb::empty(), 0);
        for b in (1..BINS).rev() {
            acc = acc.union(&bin_bounds[b]);
            cnt += bin_counts[b];
            right_area[b] = acc.surface_area();
            right_count[b] = cnt;
        }
        let (mut acc, mut cnt) = (Aabb::empty(), 0);
        for b in 1..BINS {
            acc = acc.union(&bin_bounds[b - 1]);
            cnt += bin_counts[b - 1];
            if cnt == 0 || right_count[b] == 0 {
                continue;
            }
            let cost = acc.surface_area() * cnt as f64 + right_area[b] * right_count[b] as f64;
            if best.is_none_or(|(c, _, _)| cost < c) {
                best = Some((cost, axis, b));
            }
        }
    }

    let area = node.surface_area();
    match best {
        Some((cost, axis, bin)) => {
            let split_cost = TRAVERSAL_COST + if area > 0.0 { cost / area } else { n as f64 };
            if split_cost >= n as f64 && n as u32 <= MAX_LEAF {
                return None;
            }
            let scale = BINS as f64 / extent[axis];
            let mid = partition(ids, |i| {
                (((centroids[i as usize][axis] - cb.min[axis]) * scale) as usize).min(BINS - 1)
                    < bin
            });
            (mid > 0 && mid < n).then_some(mid)
        }
        None if n as u32 > MAX_LEAF => {
            // All centroids coincide: split by count.
            Some(n / 2)
        }
        None => None,
    }
}

fn partition(ids: &mut [u32], pred: impl Fn(u32) -> bool) -> usize {
    let mut mid = 0;
    for k in 0..ids.len() {
        if pred(ids[k]) {
            ids.swap(k, mid);
            mid += 1;
        }
    }
    mid
}
