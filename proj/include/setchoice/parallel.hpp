#pragma once

#include <cstddef>
#include <functional>

namespace setchoice {

// Thread count resolution: an explicit request wins, otherwise the
// SETCHOICE_THREADS environment variable, otherwise 1.
size_t resolve_threads(size_t requested);

// Runs fn(0..n-1) on up to `threads` workers. Indices are handed out
// round-robin by slot, and callers must write only into per-index storage,
// which keeps results identical for every thread count. The first exception
// thrown by any worker is rethrown after all workers join.
void parallel_for(size_t n, size_t threads, const std::function<void(size_t)>& fn);

} // namespace setchoice
