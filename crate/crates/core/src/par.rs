//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) [`Exec::Parallel`] fans work out
//! over the rayon pool; without it every call runs sequentially. Results are
//! always returned in index order, so output never depends on scheduling.

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

/// Evaluates `f(0), f(1), ..., f(n - 1)` and collects the results in order.
pub fn map_indexed<T, F>(n: usize, exec: Exec, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Fallible variant of [`map_indexed`]; the first error in index order wins.
pub fn try_map_indexed<T, E, F>(n: usize, exec: Exec, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_indexed(n, exec, f).into_iter().collect()
}

/// Maps over a slice, preserving order.
pub fn map_slice<S, T, F>(items: &[S], exec: Exec, f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    map_indexed(items.len(), exec, |i| f(&items[i]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let seq = map_indexed(257, Exec::Sequential, |i| i * i);
        let par = map_indexed(257, Exec::Parallel, |i| i * i);
        assert_eq!(seq, par);
        assert_eq!(seq[16], 256);
    }

    #[test]
    fn first_error_in_index_order() {
        let r: Result<Vec<usize>, usize> = try_map_indexed(100, Exec::Parallel, |i| {
            if i % 30 == 29 {
                Err(i)
            } else {
                Ok(i)
            }
        });
        assert_eq!(r, Err(29));
    }
}
