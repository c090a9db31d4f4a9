//! Execution policy for the data-parallel loops.
//!
//! With the `parallel` feature (default) the hot loops fan out over rayon;
//! without it every [`Execution::Parallel`] request runs sequentially.

/// How a data-parallel loop should run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// `Parallel` when the crate was built with rayon, `Sequential` otherwise.
    pub fn available() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Map `f` over `0..len`, collecting in index order.
pub fn map_indices<T, F>(exec: Execution, len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..len).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..len).map(f).collect()
}

/// Apply `f` to every element of `items` in place.
pub fn for_each_mut<T, F>(exec: Execution, items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        items.par_iter_mut().enumerate().for_each(|(i, t)| f(i, t));
        return;
    }
    let _ = exec;
    items.iter_mut().enumerate().for_each(|(i, t)| f(i, t));
}

/// Sort floats ascending (total order; NaN never reaches here).
pub fn sort_f64(exec: Execution, values: &mut [f64]) {
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        values.par_sort_unstable_by(f64::total_cmp);
        return;
    }
    let _ = exec;
    values.sort_unstable_by(f64::total_cmp);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_policies_agree() {
        let seq = map_indices(Execution::Sequential, 100, |i| i * i);
        let par = map_indices(Execution::Parallel, 100, |i| i * i);
        assert_eq!(seq, par);

        let mut a: Vec<f64> = (0..50).map(|i| ((i * 37) % 50) as f64).collect();
        let mut b = a.clone();
        sort_f64(Execution::Sequential, &mut a);
        sort_f64(Execution::Parallel, &mut b);
        assert_eq!(a, b);
    }
}
