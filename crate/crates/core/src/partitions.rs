//! Combinatorial enumeration: integer partitions (shapes), set partitions and
//! compositions, plus a few log-space counting helpers.

use std::fmt;
use std::str::FromStr;

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// An integer partition stored as non-increasing block sizes.
///
/// Ordering is lexicographic on the block sizes, so within one `n` the shape
/// `(n)` sorts last and `(1, 1, …, 1)` first.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Shape(Vec<usize>);

impl Shape {
    /// Builds a shape from block sizes in any order. Zero-sized blocks are dropped.
    pub fn from_blocks(mut blocks: Vec<usize>) -> Self {
        blocks.retain(|&b| b > 0);
        blocks.sort_unstable_by(|a, b| b.cmp(a));
        Shape(blocks)
    }

    pub fn blocks(&self) -> &[usize] {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn num_blocks(&self) -> usize {
        self.0.len()
    }

    /// `(size, multiplicity)` pairs in decreasing size.
    pub fn multiplicities(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = Vec::new();
        for &b in &self.0 {
            match out.last_mut() {
                Some((s, m)) if *s == b => *m += 1,
                _ => out.push((b, 1)),
            }
        }
        out
    }

    /// Log of the number of set partitions of `{1..n}` with this shape,
    /// `n! / ∏_s (s!)^{m_s} m_s!`.
    pub fn ln_set_partition_count(&self) -> f64 {
        let mut v = ln_factorial(self.n());
        for (s, m) in self.multiplicities() {
            v -= m as f64 * ln_factorial(s) + ln_factorial(m);
        }
        v
    }

    /// Shape of a set partition given as a block list.
    pub fn of_set_partition(blocks: &[Vec<usize>]) -> Self {
        Shape::from_blocks(blocks.iter().map(Vec::len).collect())
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join("+"))
    }
}

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut blocks = Vec::new();
        for part in s.split('+') {
            let b: usize = part
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad shape key {s:?}")))?;
            if b == 0 {
                return Err(Error::InvalidArgument(format!("zero block in shape key {s:?}")));
            }
            blocks.push(b);
        }
        if blocks.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument(format!(
                "shape key {s:?} is not non-increasing"
            )));
        }
        Ok(Shape(blocks))
    }
}

/// All integer partitions of `n`, each as a non-increasing [`Shape`].
/// `n = 0` yields the single empty partition.
pub fn integer_partitions(n: usize) -> Vec<Shape> {
    fn rec(remaining: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Shape>) {
        if remaining == 0 {
            out.push(Shape(cur.clone()));
            return;
        }
        for b in (1..=remaining.min(max)).rev() {
            cur.push(b);
            rec(remaining - b, b, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, n, &mut Vec::new(), &mut out);
    out
}

/// All set partitions of `{0..k}` as block lists, via restricted growth strings.
/// Blocks are ordered by their smallest element.
pub fn set_partitions(k: usize) -> Vec<Vec<Vec<usize>>> {
    fn rec(i: usize, k: usize, blocks: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
        if i == k {
            out.push(blocks.clone());
            return;
        }
        for b in 0..blocks.len() {
            blocks[b].push(i);
            rec(i + 1, k, blocks, out);
            blocks[b].pop();
        }
        blocks.push(vec![i]);
        rec(i + 1, k, blocks, out);
        blocks.pop();
    }
    let mut out = Vec::new();
    rec(0, k, &mut Vec::new(), &mut out);
    out
}

/// Calls `f` on every composition of `n` into `parts` non-negative parts, in
/// reverse lexicographic order (`(n,0,…,0)` first).
pub fn for_each_composition(n: u32, parts: usize, mut f: impl FnMut(&[u32])) {
    fn rec(pos: usize, remaining: u32, cur: &mut [u32], f: &mut dyn FnMut(&[u32])) {
        if pos + 1 == cur.len() {
            cur[pos] = remaining;
            f(cur);
            return;
        }
        for a in (0..=remaining).rev() {
            cur[pos] = a;
            rec(pos + 1, remaining - a, cur, f);
        }
    }
    if parts == 0 {
        if n == 0 {
            f(&[]);
        }
        return;
    }
    let mut cur = vec![0u32; parts];
    rec(0, n, &mut cur, &mut f);
}

/// Number of compositions of `n` into `parts` parts, `C(n+parts−1, parts−1)`,
/// saturating at `u128::MAX`.
pub fn composition_count(n: u32, parts: usize) -> u128 {
    if parts == 0 {
        return u128::from(n == 0);
    }
    binomial((n as u128) + parts as u128 - 1, parts as u128 - 1)
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul(n - i) {
            Some(v) => v / (i + 1),
            None => return u128::MAX,
        };
    }
    acc
}

pub fn ln_factorial(n: usize) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

/// `ln θ^{(n)} = ln θ(θ+1)…(θ+n−1)`.
pub fn ln_rising(theta: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    ln_gamma(theta + n as f64) - ln_gamma(theta)
}
