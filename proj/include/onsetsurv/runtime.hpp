#pragma once

namespace onsetsurv {

/// Keeps freed memory in the process instead of returning it to the kernel. Training
/// allocates and frees the same large activation buffers every step, and page faults on
/// fresh mappings would otherwise dominate. No-op outside glibc.
void tune_allocator();

}  // namespace onsetsurv
