//! Order-preserving parallel task execution. Results land in index
//! order no matter how many workers run or how tasks interleave, so
//! output bytes never depend on the `--jobs` setting.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// Runs `task(0..n)` on up to `jobs` worker threads and returns the
/// results in index order. Tasks must be pure functions of their index;
/// all randomness must come from seeds derived per index beforehand.
pub fn run_indexed<T, E, F>(n: usize, jobs: usize, task: F) -> Vec<Result<T, E>>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync,
{
    if jobs <= 1 || n <= 1 {
        return (0..n).map(&task).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<T, E>>>> =
        Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(n) {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::Relaxed);
                if index >= n {
                    break;
                }
                let result = task(index);
                slots.lock().unwrap()[index] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|slot| slot.expect("every index below n was claimed by a worker"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_arrive_in_index_order_regardless_of_worker_count() {
        let sequential: Vec<_> = run_indexed(17, 1, |i| Ok::<usize, ()>(i * i));
        let parallel: Vec<_> = run_indexed(17, 4, |i| Ok::<usize, ()>(i * i));
        let seq: Vec<usize> = sequential.into_iter().map(Result::unwrap).collect();
        let par: Vec<usize> = parallel.into_iter().map(Result::unwrap).collect();
        assert_eq!(seq, par);
        assert_eq!(seq[16], 256);
    }

    #[test]
    fn failures_keep_their_indices() {
        let results = run_indexed(5, 3, |i| if i == 2 { Err(i) } else { Ok(i) });
        assert!(results[2].is_err());
        assert_eq!(results.iter().filter(|r| r.is_ok()).count(), 4);
    }

    #[test]
    fn empty_and_single_task_runs_work() {
        assert!(run_indexed(0, 4, |i| Ok::<usize, ()>(i)).is_empty());
        let one = run_indexed(1, 4, |i| Ok::<usize, ()>(i + 10));
        assert_eq!(one.len(), 1);
    }
}
