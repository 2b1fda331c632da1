#pragma once

namespace dlab {

// Turns off glibc's mmap path and raises the trim threshold so the large
// per-update activation buffers are reused from the heap instead of being
// mapped and unmapped each time. No-op on other C libraries.
void tune_allocator();

}  // namespace dlab
