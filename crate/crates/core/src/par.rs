//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature the helpers fan work out on rayon; without it
//! they run plain sequential loops. Every call site hands each unit of work
//! exclusive ownership of its output slice or slot, and summation order is
//! fixed inside a unit, so results are bit-identical across both paths and
//! any thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Apply `f(row_index, row)` to every `ncols`-wide row of `buf`.
pub fn for_each_row<F>(buf: &mut [f64], ncols: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    debug_assert!(ncols > 0 && buf.len() % ncols == 0);
    #[cfg(feature = "parallel")]
    {
        buf.par_chunks_mut(ncols)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (i, row) in buf.chunks_mut(ncols).enumerate() {
            f(i, row);
        }
    }
}

/// Like [`for_each_row`], but hands each row an exclusive extra slot
/// (typically a `&mut f64` accumulator owned by that row).
pub fn for_each_row_with<T, F>(buf: &mut [f64], ncols: usize, extras: Vec<T>, f: F)
where
    T: Send,
    F: Fn(usize, &mut [f64], T) + Sync + Send,
{
    debug_assert!(ncols > 0 && buf.len() % ncols == 0);
    debug_assert_eq!(buf.len() / ncols, extras.len());
    #[cfg(feature = "parallel")]
    {
        buf.par_chunks_mut(ncols)
            .zip(extras.into_par_iter())
            .enumerate()
            .for_each(|(i, (row, extra))| f(i, row, extra));
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (i, (row, extra)) in buf.chunks_mut(ncols).zip(extras).enumerate() {
            f(i, row, extra);
        }
    }
}

/// Map `f` over `0..len`, collecting results in index order.
pub fn map_indexed<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..len).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).map(f).collect()
    }
}

/// Map `f` over a slice of inputs, preserving order.
pub fn map_slice<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}
