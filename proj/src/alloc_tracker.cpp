// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The momentloc Authors

#include "alloc_tracker.hpp"

#include <algorithm>

namespace momentloc {
namespace {
thread_local AllocationScope* g_current = nullptr;
}

AllocationScope::AllocationScope() : previous_(g_current) { g_current = this; }

AllocationScope::~AllocationScope() { g_current = previous_; }

AllocationScope* AllocationScope::current() noexcept { return g_current; }

void AllocationScope::on_allocate(std::size_t bytes) noexcept {
  for (AllocationScope* s = g_current; s != nullptr; s = s->previous_) {
    s->live_ += static_cast<std::int64_t>(bytes);
    s->peak_ = std::max(s->peak_, s->live_);
  }
}

void AllocationScope::on_deallocate(std::size_t bytes) noexcept {
  for (AllocationScope* s = g_current; s != nullptr; s = s->previous_)
    s->live_ -= static_cast<std::int64_t>(bytes);
}

}  // namespace momentloc
