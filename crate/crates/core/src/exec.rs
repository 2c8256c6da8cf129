//! Execution helpers for data-parallel loops.
//!
//! With the `parallel` feature the helpers fan out over rayon's global pool;
//! without it, or inside [`sequential`], they run on the calling thread.
//! Both paths produce identical results: maps preserve order and reductions
//! use the same fixed pairwise tree.

use std::cell::Cell;

thread_local! {
    static FORCE_SEQUENTIAL: Cell<bool> = const { Cell::new(false) };
}

/// Runs `f` with every helper in this module forced onto the calling thread.
pub fn sequential<R>(f: impl FnOnce() -> R) -> R {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            FORCE_SEQUENTIAL.with(|c| c.set(self.0));
        }
    }
    let prev = FORCE_SEQUENTIAL.with(|c| c.replace(true));
    let _restore = Restore(prev);
    f()
}

/// True when helpers called from this thread will fan out.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && !FORCE_SEQUENTIAL.with(|c| c.get())
}

/// Order-preserving map over `0..n`.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Order-preserving map over a slice.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    items.iter().map(f).collect()
}

/// Fallible order-preserving map over `0..n`; returns the first error by index.
pub fn try_map_range<R, E, F>(n: usize, f: F) -> Result<Vec<R>, E>
where
    R: Send,
    E: Send,
    F: Fn(usize) -> Result<R, E> + Sync + Send,
{
    map_range(n, f).into_iter().collect()
}

/// Reduces `items` with `combine` along a balanced binary tree.
///
/// The tree shape depends only on `items.len()`, so floating-point results
/// are bit-identical between the sequential and parallel paths.
pub fn pairwise_reduce<T, F>(mut items: Vec<T>, combine: &F) -> Option<T>
where
    T: Send,
    F: Fn(T, T) -> T + Sync,
{
    match items.len() {
        0 => None,
        1 => items.pop(),
        n => {
            let right = items.split_off(n / 2);
            let (l, r) = join(
                || pairwise_reduce(items, combine),
                || pairwise_reduce(right, combine),
            );
            match (l, r) {
                (Some(l), Some(r)) => Some(combine(l, r)),
                (l, r) => l.or(r),
            }
        }
    }
}

/// `rayon::join` when parallel, otherwise `a` then `b`.
pub fn join<A, B, RA, RB>(a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        return rayon::join(a, b);
    }
    (a(), b())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order_in_both_modes() {
        let par = map_range(100, |i| i * i);
        let seq = sequential(|| map_range(100, |i| i * i));
        assert_eq!(par, seq);
        assert_eq!(par[7], 49);
    }

    #[test]
    fn sequential_flag_is_scoped() {
        sequential(|| assert!(!is_parallel()));
        assert_eq!(is_parallel(), cfg!(feature = "parallel"));
    }

    #[test]
    fn pairwise_reduce_is_mode_independent() {
        let xs: Vec<f64> = (0..1000).map(|i| 1.0 / (i as f64 + 0.3)).collect();
        let a = pairwise_reduce(xs.clone(), &|a, b| a + b).unwrap();
        let b = sequential(|| pairwise_reduce(xs, &|a, b| a + b)).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert!(pairwise_reduce(Vec::<f64>::new(), &|a, b| a + b).is_none());
    }
}
