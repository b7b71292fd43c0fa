#ifndef DGGCN_HEAP_HPP
#define DGGCN_HEAP_HPP

// Training allocates and frees megabyte-sized tensors on every step. With the
// default glibc policy those go through mmap or get trimmed back to the kernel,
// and each reuse pays for page faults. Executables call this once at startup.

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace dggcn {

inline void retain_heap_memory() noexcept {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

} // namespace dggcn

#endif // DGGCN_HEAP_HPP
