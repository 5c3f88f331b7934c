//! Data-parallel helpers with a sequential fallback.
//!
//! Every helper produces output element `j` from `f(j)` alone, so the result
//! is bit-identical whichever execution mode runs it.

/// Execution mode for the data-parallel kernels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

#[allow(clippy::derivable_impls)]
impl Default for Exec {
    /// Parallel when the `parallel` feature is on.
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        return Exec::Parallel;
        #[cfg(not(feature = "parallel"))]
        Exec::Sequential
    }
}

/// Fills `out[j] = f(j)`.
pub fn fill<F>(exec: Exec, out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    match exec {
        Exec::Sequential => out.iter_mut().enumerate().for_each(|(j, o)| *o = f(j)),
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            out.par_iter_mut().enumerate().for_each(|(j, o)| *o = f(j));
        }
    }
}

/// Collects `f(j)` for `j in 0..n`, in index order.
pub fn map_collect<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        Exec::Sequential => (0..n).map(f).collect(),
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
    }
}
