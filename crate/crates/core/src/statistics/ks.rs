//! Two-sample Kolmogorov-Smirnov distance.
//!
//! Both empirical CDFs are right-continuous. With reference size `n` and
//! window size `m`, `n * m * (F_n(u) - G_m(u)) = m * #{x_i <= u} - n * #{y_j <= u}`
//! is an integer, so the supremum is computed exactly in integer arithmetic
//! and only converted to a float at the end.

use std::cmp::Ordering;

use crate::scalar::{cmp, Scalar};

/// Exact KS supremum, scaled by `n * m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct KsScaled {
    pub numerator: u64,
    pub n: usize,
    pub m: usize,
}

impl KsScaled {
    pub fn denominator(&self) -> u64 {
        self.n as u64 * self.m as u64
    }

    pub fn value<T: Scalar>(&self) -> T {
        T::from_u64(self.numerator).unwrap() / T::from_u64(self.denominator()).unwrap()
    }
}

/// Merge-scan over two ascending slices; `O(n + m)`.
pub fn ks_scaled_sorted<T: Scalar>(reference: &[T], window: &[T]) -> KsScaled {
    let (n, m) = (reference.len(), window.len());
    let (ni, mi) = (n as i64, m as i64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut best: i64 = 0;
    while i < n || j < m {
        // next distinct merged point
        let u = match (reference.get(i), window.get(j)) {
            (Some(a), Some(b)) => {
                if cmp(a, b) == Ordering::Greater {
                    *b
                } else {
                    *a
                }
            }
            (Some(a), None) => *a,
            (None, Some(b)) => *b,
            (None, None) => unreachable!(),
        };
        while i < n && cmp(&reference[i], &u) != Ordering::Greater {
            i += 1;
        }
        while j < m && cmp(&window[j], &u) != Ordering::Greater {
            j += 1;
        }
        let d = (mi * i as i64 - ni * j as i64).abs();
        best = best.max(d);
    }
    KsScaled { numerator: best as u64, n, m }
}

const NIL: u32 = u32::MAX;
const NEG: i64 = i64::MIN / 4;
const POS: i64 = i64::MAX / 4;

#[derive(Debug, Clone)]
struct Node<T> {
    key: T,
    prio: u32,
    left: u32,
    right: u32,
    ref_count: u32,
    win_count: u32,
    sum: i64,
    max_prefix: i64,
    min_prefix: i64,
}

/// Incremental KS distance between a fixed reference and a full sliding
/// window of capacity `w`.
///
/// A treap keyed by distinct sample value stores the jump
/// `w * ref_count - n * win_count` at each key; prefix sums are
/// `n * w * (F_n - G_w)` and the subtree max/min prefix gives the supremum
/// at the root. Insert and remove are `O(log(n + w))`.
#[derive(Debug, Clone)]
pub struct KsTracker<T: Scalar> {
    nodes: Vec<Node<T>>,
    free: Vec<u32>,
    root: u32,
    n: usize,
    w: usize,
    window_len: usize,
    rng: u64,
}

impl<T: Scalar> KsTracker<T> {
    /// `sorted_reference` must be ascending.
    pub fn new(sorted_reference: &[T], w: usize) -> Self {
        assert!(w >= 1);
        let mut distinct: Vec<(T, u32)> = Vec::new();
        for &v in sorted_reference {
            match distinct.last_mut() {
                Some((k, c)) if cmp(k, &v) == Ordering::Equal => *c += 1,
                _ => distinct.push((v, 1)),
            }
        }
        let mut tracker = Self {
            nodes: Vec::with_capacity(distinct.len() + w + 1),
            free: Vec::new(),
            root: NIL,
            n: sorted_reference.len(),
            w,
            window_len: 0,
            rng: 0x2545_F491_4F6C_DD1D,
        };
        tracker.root = tracker.build(&distinct, 0);
        tracker
    }

    pub fn reference_len(&self) -> usize {
        self.n
    }

    pub fn capacity(&self) -> usize {
        self.w
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn insert(&mut self, value: T) {
        self.root = self.add(self.root, value);
        self.window_len += 1;
    }

    /// Removes one window occurrence of `value`; returns false if absent.
    pub fn remove(&mut self, value: T) -> bool {
        let mut found = false;
        self.root = self.del(self.root, value, &mut found);
        if found {
            self.window_len -= 1;
        }
        found
    }

    /// Exact supremum, valid only when the window holds exactly `w` values.
    pub fn scaled(&self) -> KsScaled {
        assert_eq!(self.window_len, self.w, "KS tracker queried with a partial window");
        let numerator = if self.root == NIL {
            0
        } else {
            let r = &self.nodes[self.root as usize];
            r.max_prefix.max(-r.min_prefix).max(0) as u64
        };
        KsScaled { numerator, n: self.n, m: self.w }
    }

    pub fn value(&self) -> T {
        self.scaled().value()
    }

    fn next_prio(&mut self) -> u32 {
        // xorshift64*
        self.rng ^= self.rng >> 12;
        self.rng ^= self.rng << 25;
        self.rng ^= self.rng >> 27;
        (self.rng.wrapping_mul(0x2545_F491_4F6C_DD1D) >> 32) as u32
    }

    fn alloc(&mut self, node: Node<T>) -> u32 {
        if let Some(i) = self.free.pop() {
            self.nodes[i as usize] = node;
            i
        } else {
            self.nodes.push(node);
            (self.nodes.len() - 1) as u32
        }
    }

    fn build(&mut self, items: &[(T, u32)], depth: u32) -> u32 {
        if items.is_empty() {
            return NIL;
        }
        let mid = items.len() / 2;
        // Priority bands shrink with depth so the balanced shape is a valid heap.
        let band = 48u32.saturating_sub(depth).min(63);
        let prio = (band << 26) | (self.next_prio() >> 6);
        let idx = self.alloc(Node {
            key: items[mid].0,
            prio,
            left: NIL,
            right: NIL,
            ref_count: items[mid].1,
            win_count: 0,
            sum: 0,
            max_prefix: 0,
            min_prefix: 0,
        });
        let l = self.build(&items[..mid], depth + 1);
        let r = self.build(&items[mid + 1..], depth + 1);
        self.nodes[idx as usize].left = l;
        self.nodes[idx as usize].right = r;
        self.pull(idx);
        idx
    }

    #[inline]
    fn pull(&mut self, idx: u32) {
        let (l, r, weight) = {
            let nd = &self.nodes[idx as usize];
            let weight =
                self.w as i64 * nd.ref_count as i64 - self.n as i64 * nd.win_count as i64;
            (nd.left, nd.right, weight)
        };
        let (ls, lmax, lmin) = self.aggregates(l);
        let (rs, rmax, rmin) = self.aggregates(r);
        let through = ls + weight;
        let nd = &mut self.nodes[idx as usize];
        nd.sum = through + rs;
        nd.max_prefix = lmax.max(through).max(through + rmax);
        nd.min_prefix = lmin.min(through).min(through + rmin);
    }

    #[inline]
    fn aggregates(&self, idx: u32) -> (i64, i64, i64) {
        if idx == NIL {
            (0, NEG, POS)
        } else {
            let nd = &self.nodes[idx as usize];
            (nd.sum, nd.max_prefix, nd.min_prefix)
        }
    }

    fn rotate_right(&mut self, idx: u32) -> u32 {
        let l = self.nodes[idx as usize].left;
        self.nodes[idx as usize].left = self.nodes[l as usize].right;
        self.nodes[l as usize].right = idx;
        self.pull(idx);
        self.pull(l);
        l
    }

    fn rotate_left(&mut self, idx: u32) -> u32 {
        let r = self.nodes[idx as usize].right;
        self.nodes[idx as usize].right = self.nodes[r as usize].left;
        self.nodes[r as usize].left = idx;
        self.pull(idx);
        self.pull(r);
        r
    }

    fn add(&mut self, idx: u32, key: T) -> u32 {
        if idx == NIL {
            let prio = self.next_prio();
            let new = self.alloc(Node {
                key,
                prio,
                left: NIL,
                right: NIL,
                ref_count: 0,
                win_count: 1,
                sum: 0,
                max_prefix: 0,
                min_prefix: 0,
            });
            self.pull(new);
            return new;
        }
        match cmp(&key, &self.nodes[idx as usize].key) {
            Ordering::Equal => {
                self.nodes[idx as usize].win_count += 1;
                self.pull(idx);
                idx
            }
            Ordering::Less => {
                let child = self.add(self.nodes[idx as usize].left, key);
                self.nodes[idx as usize].left = child;
                if self.nodes[child as usize].prio > self.nodes[idx as usize].prio {
                    self.rotate_right(idx)
                } else {
                    self.pull(idx);
                    idx
                }
            }
            Ordering::Greater => {
                let child = self.add(self.nodes[idx as usize].right, key);
                self.nodes[idx as usize].right = child;
                if self.nodes[child as usize].prio > self.nodes[idx as usize].prio {
                    self.rotate_left(idx)
                } else {
                    self.pull(idx);
                    idx
                }
            }
        }
    }

    fn del(&mut self, idx: u32, key: T, found: &mut bool) -> u32 {
        if idx == NIL {
            return NIL;
        }
        match cmp(&key, &self.nodes[idx as usize].key) {
            Ordering::Equal => {
                let nd = &mut self.nodes[idx as usize];
                if nd.win_count == 0 {
                    return idx;
                }
                *found = true;
                nd.win_count -= 1;
                if nd.win_count == 0 && nd.ref_count == 0 {
                    let (l, r) = (nd.left, nd.right);
                    self.free.push(idx);
                    return self.merge(l, r);
                }
                self.pull(idx);
                idx
            }
            Ordering::Less => {
                let child = self.del(self.nodes[idx as usize].left, key, found);
                self.nodes[idx as usize].left = child;
                self.pull(idx);
                idx
            }
            Ordering::Greater => {
                let child = self.del(self.nodes[idx as usize].right, key, found);
                self.nodes[idx as usize].right = child;
                self.pull(idx);
                idx
            }
        }
    }

    fn merge(&mut self, a: u32, b: u32) -> u32 {
        if a == NIL {
            return b;
        }
        if b == NIL {
            return a;
        }
        if self.nodes[a as usize].prio > self.nodes[b as usize].prio {
            let r = self.merge(self.nodes[a as usize].right, b);
            self.nodes[a as usize].right = r;
            self.pull(a);
            a
        } else {
            let l = self.merge(a, self.nodes[b as usize].left);
            self.nodes[b as usize].left = l;
            self.pull(b);
            b
        }
    }
}
