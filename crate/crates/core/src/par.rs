//! Index-parallel map over a bounded worker pool, or a plain loop when the
//! `parallel` feature is off. Output order always follows the index.

use crate::error::Result;

#[cfg(feature = "parallel")]
pub fn try_map_indexed<T, F>(n: usize, threads: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;
    if threads == Some(1) {
        return sequential(n, f);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| crate::error::SvError::Config(format!("thread pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(f).collect())
}

#[cfg(not(feature = "parallel"))]
pub fn try_map_indexed<T, F>(n: usize, _threads: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    sequential(n, f)
}

pub fn sequential<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    F: Fn(usize) -> Result<T>,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::SvError;

    #[test]
    fn order_follows_index() {
        for threads in [None, Some(1), Some(3)] {
            let v = try_map_indexed(50, threads, |i| Ok(i * i)).unwrap();
            assert_eq!(v, (0..50).map(|i| i * i).collect::<Vec<_>>());
        }
    }

    #[test]
    fn first_error_is_reported() {
        let r: Result<Vec<usize>> = try_map_indexed(10, Some(2), |i| {
            if i == 7 {
                Err(SvError::StuckSampler(i))
            } else {
                Ok(i)
            }
        });
        assert_eq!(r, Err(SvError::StuckSampler(7)));
    }
}
