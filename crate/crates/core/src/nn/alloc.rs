//! Keeps freed activation buffers in the heap instead of returning them to the OS.
//!
//! Large tensors are otherwise mmapped and unmapped on every step, and the page
//! faults on first touch cost more than the arithmetic in elementwise layers.

use std::sync::Once;

static TUNE: Once = Once::new();

pub fn retain_freed_memory() {
    TUNE.call_once(|| {
        #[cfg(all(target_os = "linux", target_env = "gnu"))]
        unsafe {
            libc::mallopt(libc::M_MMAP_THRESHOLD, 1 << 30);
            libc::mallopt(libc::M_TRIM_THRESHOLD, i32::MAX);
        }
    });
}
