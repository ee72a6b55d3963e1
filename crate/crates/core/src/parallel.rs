//! Order-preserving parallel map. `NO_PARALLEL=1` forces sequential execution.

use rayon::prelude::*;

pub fn sequential_forced() -> bool {
    std::env::var("NO_PARALLEL").is_ok_and(|v| v == "1")
}

pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    if sequential_forced() {
        items.iter().map(f).collect()
    } else {
        items.par_iter().map(f).collect()
    }
}
