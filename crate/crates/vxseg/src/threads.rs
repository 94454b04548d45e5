//! Worker-thread cap. `VXSG_THREADS` limits the global rayon pool; unset
//! means one worker per core.

use std::sync::Once;

static INIT: Once = Once::new();

/// Initializes the global thread pool from the `VXSG_THREADS` environment
/// variable. Safe to call repeatedly; only the first call takes effect.
pub fn init_thread_pool_from_env() {
    INIT.call_once(|| {
        if let Ok(v) = std::env::var("VXSG_THREADS") {
            if let Ok(n) = v.trim().parse::<usize>() {
                if n >= 1 {
                    // ignore failure: a pool may already exist in-process
                    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
                }
            }
        }
    });
}
