//! Data-parallel helpers with a sequential fallback.
//!
//! All reductions split the index range into fixed blocks of [`BLOCK`]
//! elements, reduce each block sequentially, and then combine the block
//! results pairwise in index order. The association order therefore depends
//! only on the problem size, never on the number of worker threads.

use std::ops::Range;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Number of items reduced sequentially inside one block.
pub const BLOCK: usize = 256;

/// `(0..n).map(f).collect()`, in parallel when enabled.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Runs `f(chunk_index, chunk)` over consecutive `chunk`-sized pieces of `data`.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    assert!(chunk > 0, "chunk size must be positive");
    #[cfg(feature = "parallel")]
    {
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }
}

/// Like [`for_each_chunk_mut`] but over two slices chunked in lockstep.
pub fn for_each_chunk_pair_mut<A, B, F>(a: &mut [A], ca: usize, b: &mut [B], cb: usize, f: F)
where
    A: Send,
    B: Send,
    F: Fn(usize, &mut [A], &mut [B]) + Sync + Send,
{
    assert!(ca > 0 && cb > 0, "chunk size must be positive");
    #[cfg(feature = "parallel")]
    {
        a.par_chunks_mut(ca)
            .zip(b.par_chunks_mut(cb))
            .enumerate()
            .for_each(|(i, (x, y))| f(i, x, y));
    }
    #[cfg(not(feature = "parallel"))]
    {
        a.chunks_mut(ca)
            .zip(b.chunks_mut(cb))
            .enumerate()
            .for_each(|(i, (x, y))| f(i, x, y));
    }
}

/// Deterministic blocked reduction over `0..n`.
///
/// `map` receives one block range at a time. Returns `None` when `n == 0`.
pub fn block_reduce<T, M, C>(n: usize, map: M, combine: C) -> Option<T>
where
    T: Send,
    M: Fn(Range<usize>) -> T + Sync + Send,
    C: Fn(T, T) -> T,
{
    if n == 0 {
        return None;
    }
    let n_blocks = n.div_ceil(BLOCK);
    let partials = map_indexed(n_blocks, |b| map(b * BLOCK..((b + 1) * BLOCK).min(n)));
    Some(pairwise(partials, &combine))
}

fn pairwise<T, C: Fn(T, T) -> T>(mut items: Vec<T>, combine: &C) -> T {
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(combine(a, b)),
                None => next.push(a),
            }
        }
        items = next;
    }
    items.pop().expect("non-empty")
}

/// Deterministic sum of `f(i)` for `i in 0..n`.
pub fn tree_sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    block_reduce(n, |r| r.map(&f).sum::<f64>(), |a, b| a + b).unwrap_or(0.0)
}

/// Deterministic element-wise sum of fixed-length vectors produced per index.
pub fn tree_sum_vec<F>(n: usize, len: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    block_reduce(
        n,
        |r| {
            let mut acc = vec![0.0; len];
            for i in r {
                f(i, &mut acc);
            }
            acc
        },
        |mut a, b| {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            a
        },
    )
    .unwrap_or_else(|| vec![0.0; len])
}
