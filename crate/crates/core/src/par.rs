//! Order-preserving map over independent work items. With the `parallel`
//! feature (default) the work is distributed over the rayon pool; without
//! it, or via `seq_map`, everything runs on the calling thread. Both paths
//! return results in input order, so callers see identical output either
//! way.

#[cfg(feature = "parallel")]
pub fn par_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Send + Sync,
{
    use rayon::prelude::*;
    items.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn par_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Send + Sync,
{
    seq_map(items, f)
}

pub fn seq_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U,
{
    items.into_iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_paths_preserve_input_order() {
        let items: Vec<u64> = (0..1000).collect();
        let f = |v: u64| v * v + 1;
        assert_eq!(par_map(items.clone(), f), seq_map(items, f));
    }
}
