//! Block-parallel map/reduce with a sequential fallback.
//!
//! Work is split into a fixed number of blocks whose per-block results are
//! computed independently (in parallel when the `parallel` feature is on) and
//! then folded strictly in block order. Results are therefore bit-identical
//! between the two execution modes and across thread counts.

use std::sync::atomic::{AtomicU8, Ordering};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Parallel,
    Sequential,
}

static MODE: AtomicU8 = AtomicU8::new(0);

/// Overrides the process-wide execution mode. Without the `parallel` feature
/// everything runs sequentially regardless.
pub fn set_execution(mode: Execution) {
    MODE.store(
        match mode {
            Execution::Parallel => 0,
            Execution::Sequential => 1,
        },
        Ordering::Relaxed,
    );
}

pub fn execution() -> Execution {
    if cfg!(feature = "parallel") && MODE.load(Ordering::Relaxed) == 0 {
        Execution::Parallel
    } else {
        Execution::Sequential
    }
}

/// Evaluates `f(0..blocks)` and returns the results in block order.
pub fn map_blocks<T, F>(blocks: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if execution() == Execution::Parallel {
        use rayon::prelude::*;
        return (0..blocks).into_par_iter().map(f).collect();
    }
    (0..blocks).map(f).collect()
}

/// Fallible variant of [`map_blocks`]; the first error in block order wins.
pub fn try_map_blocks<T, E, F>(blocks: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_blocks(blocks, f).into_iter().collect()
}

/// Splits `n` items into `(start, len)` chunks of at most `block` items.
pub fn chunks(n: usize, block: usize) -> Vec<(usize, usize)> {
    let block = block.max(1);
    (0..n.div_ceil(block))
        .map(|b| {
            let start = b * block;
            (start, block.min(n - start))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunking_covers_range() {
        let c = chunks(10, 4);
        assert_eq!(c, vec![(0, 4), (4, 4), (8, 2)]);
        assert!(chunks(0, 4).is_empty());
    }

    #[test]
    fn order_is_preserved() {
        let v = map_blocks(100, |i| i * i);
        assert_eq!(v, (0..100).map(|i| i * i).collect::<Vec<_>>());
    }
}
