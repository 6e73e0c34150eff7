//! Execution backends for the per-cell kernels.
//!
//! Every hot loop writes each output cell exactly once from read-only
//! inputs, so the parallel and sequential backends produce bit-identical
//! results; only wall time differs. The `parallel` feature (on by default)
//! pulls in rayon and makes [`ExecMode::Par`] available and the default.
//! Benchmarks select modes explicitly to compare the two.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Minimum cells per task before splitting work across threads.
#[cfg(feature = "parallel")]
const MIN_BAND_CELLS: usize = 4096;

/// Which backend runs a kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExecMode {
    /// Plain loop on the calling thread.
    Seq,
    /// rayon work-stealing over contiguous bands of cells.
    #[cfg(feature = "parallel")]
    Par,
}

impl Default for ExecMode {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        {
            ExecMode::Par
        }
        #[cfg(not(feature = "parallel"))]
        {
            ExecMode::Seq
        }
    }
}

/// Fill `out` by calling `kernel(start, band)` on contiguous bands whose
/// length is a multiple of `row` (except possibly the last); `start` is the
/// flat index of the band's first cell.
pub fn fill_bands<F>(mode: ExecMode, out: &mut [f64], row: usize, kernel: F)
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    debug_assert!(row > 0);
    match mode {
        ExecMode::Seq => kernel(0, out),
        #[cfg(feature = "parallel")]
        ExecMode::Par => {
            let band = row * MIN_BAND_CELLS.div_ceil(row);
            out.par_chunks_mut(band)
                .enumerate()
                .for_each(|(k, chunk)| kernel(k * band, chunk));
        }
    }
}

/// Map `task` over `items`, preserving order of results.
pub fn map_tasks<T, R, F>(mode: ExecMode, items: Vec<T>, task: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    match mode {
        ExecMode::Seq => items.into_iter().map(task).collect(),
        #[cfg(feature = "parallel")]
        ExecMode::Par => items.into_par_iter().map(task).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kernel(start: usize, band: &mut [f64]) {
        for (k, o) in band.iter_mut().enumerate() {
            let i = start + k;
            *o = (i as f64).sqrt().sin();
        }
    }

    #[test]
    fn seq_fills_everything() {
        let mut out = vec![0.0; 10_000];
        fill_bands(ExecMode::Seq, &mut out, 100, kernel);
        assert_eq!(out[17], (17.0f64).sqrt().sin());
        assert_eq!(out[9_999], (9_999.0f64).sqrt().sin());
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn par_matches_seq_bitwise() {
        let mut a = vec![0.0; 123_457];
        let mut b = vec![0.0; 123_457];
        fill_bands(ExecMode::Seq, &mut a, 371, kernel);
        fill_bands(ExecMode::Par, &mut b, 371, kernel);
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn map_tasks_preserves_order() {
        let items: Vec<usize> = (0..1000).collect();
        let seq = map_tasks(ExecMode::Seq, items.clone(), |i| i * i);
        let par = map_tasks(ExecMode::Par, items, |i| i * i);
        assert_eq!(seq, par);
    }
}
