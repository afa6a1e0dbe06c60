//! Global scalar-multiplication counter.
//!
//! Scalar multiplication is the cost unit the protocol is usually measured
//! in, so `curve` bumps this counter on every multiplication and cost
//! comparisons read it back. Purely informational — nothing branches on it.

use std::sync::atomic::{AtomicU64, Ordering};

static SCALAR_MULS: AtomicU64 = AtomicU64::new(0);

pub fn record_scalar_mul() {
    SCALAR_MULS.fetch_add(1, Ordering::Relaxed);
}

pub fn scalar_muls() -> u64 {
    SCALAR_MULS.load(Ordering::Relaxed)
}

/// Runs `f` and returns its result together with the number of scalar
/// multiplications it performed. Counter is global, so concurrent tests can
/// inflate the number; callers that care run single-threaded.
pub fn measure<T>(f: impl FnOnce() -> T) -> (T, u64) {
    let before = scalar_muls();
    let out = f();
    (out, scalar_muls() - before)
}

#[cfg(test)]
mod tests {
    #[test]
    fn measure_counts_muls() {
        let params = crate::curve::t17();
        let (_, n) = super::measure(|| {
            let _ = params.mul_g(&3u32.into());
            let _ = params.mul_g(&7u32.into());
        });
        assert_eq!(n, 2);
    }
}
