#pragma once

#include <cstddef>
#include <new>
#include <vector>

namespace csnake {

// Eigen peels unaligned heads of mapped buffers before vectorizing, so the
// summation order of a reduction depends on the buffer address modulo the
// SIMD width. Every buffer that is viewed through an Eigen map starts on a
// 64-byte boundary to keep results independent of heap layout.
template <class T>
struct CacheAlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlignment{64};

    CacheAlignedAllocator() noexcept = default;
    template <class U>
    CacheAlignedAllocator(const CacheAlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

    template <class U>
    friend bool operator==(const CacheAlignedAllocator&, const CacheAlignedAllocator<U>&) noexcept {
        return true;
    }
};

using AlignedVector = std::vector<double, CacheAlignedAllocator<double>>;

} // namespace csnake
