// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The momentloc Authors

#pragma once

#include <cstddef>
#include <cstdint>
#include <new>

namespace momentloc {

// Per-thread high-water-mark counter for tensor payload bytes. While an
// AllocationScope is alive on a thread, every TrackedAllocator allocation on
// that thread is charged to it.
class AllocationScope {
 public:
  AllocationScope();
  ~AllocationScope();
  AllocationScope(const AllocationScope&) = delete;
  AllocationScope& operator=(const AllocationScope&) = delete;

  std::int64_t live_bytes() const noexcept { return live_; }
  std::int64_t peak_bytes() const noexcept { return peak_; }

  static AllocationScope* current() noexcept;
  static void on_allocate(std::size_t bytes) noexcept;
  static void on_deallocate(std::size_t bytes) noexcept;

 private:
  AllocationScope* previous_;
  std::int64_t live_ = 0;
  std::int64_t peak_ = 0;
};

template <class T>
struct TrackedAllocator {
  using value_type = T;

  TrackedAllocator() noexcept = default;
  template <class U>
  TrackedAllocator(const TrackedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    T* p = static_cast<T*>(::operator new(n * sizeof(T)));
    AllocationScope::on_allocate(n * sizeof(T));
    return p;
  }
  void deallocate(T* p, std::size_t n) noexcept {
    AllocationScope::on_deallocate(n * sizeof(T));
    ::operator delete(p);
  }

  template <class U>
  bool operator==(const TrackedAllocator<U>&) const noexcept {
    return true;
  }
};

}  // namespace momentloc
