//! Record-level data parallelism with a sequential fallback.
//!
//! All parallelism in the pipeline is at record granularity: items map
//! independently and results come back in input order, so output files are
//! identical whatever the worker count. Built with rayon when the `parallel`
//! feature (default) is enabled; otherwise everything runs sequentially.

/// Number of workers to use when the configuration does not say.
pub fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

#[cfg(feature = "parallel")]
pub fn map_records<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    use rayon::prelude::*;
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    // The global pool already has default-parallelism width; only a
    // non-default width needs a scoped pool.
    if workers >= default_workers() {
        return items.par_iter().map(&f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(_) => items.iter().map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_records<T, R, F>(items: &[T], _workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_input_order() {
        let items: Vec<u64> = (0..500).collect();
        let doubled = map_records(&items, 8, |x| x * 2);
        let expected: Vec<u64> = items.iter().map(|x| x * 2).collect();
        assert_eq!(doubled, expected);
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let items: Vec<u64> = (0..100).collect();
        let seq = map_records(&items, 1, |x| x * x + 1);
        let par = map_records(&items, 4, |x| x * x + 1);
        assert_eq!(seq, par);
    }
}
