//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) these dispatch to rayon; without it
//! they run sequentially. Work items are always independent and results are
//! gathered in index order, so both paths produce bit-identical output.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// `f(0), f(1), ..., f(n-1)` collected in order.
#[cfg(feature = "parallel")]
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Map over a slice, preserving order.
#[cfg(feature = "parallel")]
pub fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Call `f(row_index, row)` for each `width`-long row of `data`.
#[cfg(feature = "parallel")]
pub fn for_each_row_mut<F>(data: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if width == 0 {
        return;
    }
    data.par_chunks_mut(width)
        .enumerate()
        .for_each(|(i, row)| f(i, row));
}

#[cfg(not(feature = "parallel"))]
pub fn for_each_row_mut<F>(data: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if width == 0 {
        return;
    }
    data.chunks_mut(width)
        .enumerate()
        .for_each(|(i, row)| f(i, row));
}

/// Like [`for_each_row_mut`], also handing out the matching element of `aux`.
#[cfg(feature = "parallel")]
pub fn for_each_row_mut_with<T, F>(data: &mut [f64], width: usize, aux: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut [f64], &mut T) + Sync + Send,
{
    if width == 0 {
        return;
    }
    data.par_chunks_mut(width)
        .zip(aux.par_iter_mut())
        .enumerate()
        .for_each(|(i, (row, a))| f(i, row, a));
}

#[cfg(not(feature = "parallel"))]
pub fn for_each_row_mut_with<T, F>(data: &mut [f64], width: usize, aux: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut [f64], &mut T) + Sync + Send,
{
    if width == 0 {
        return;
    }
    data.chunks_mut(width)
        .zip(aux.iter_mut())
        .enumerate()
        .for_each(|(i, (row, a))| f(i, row, a));
}

/// Run `f` with at most `jobs` worker threads. `None` uses the global pool.
#[cfg(feature = "parallel")]
pub fn with_jobs<T: Send, F: FnOnce() -> T + Send>(jobs: Option<usize>, f: F) -> T {
    match jobs {
        Some(n) if n > 0 => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(err) => {
                log::warn!("could not build a {n}-thread pool ({err}); using the global pool");
                f()
            }
        },
        _ => f(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_jobs<T: Send, F: FnOnce() -> T + Send>(_jobs: Option<usize>, f: F) -> T {
    f()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_range_preserves_order() {
        let v = map_range(1000, |i| i * 2);
        assert!(v.iter().enumerate().all(|(i, &x)| x == 2 * i));
    }

    #[test]
    fn rows_are_visited_once() {
        let mut data = vec![0.0; 12];
        for_each_row_mut(&mut data, 3, |i, row| row.iter_mut().for_each(|x| *x += i as f64));
        assert_eq!(data, vec![0., 0., 0., 1., 1., 1., 2., 2., 2., 3., 3., 3.]);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let f = |i: usize| ((i as f64) * 0.37).sin();
        let one = with_jobs(Some(1), || map_range(513, f));
        let many = with_jobs(Some(4), || map_range(513, f));
        assert_eq!(one, many);
    }
}
