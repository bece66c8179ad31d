#pragma once

namespace skullkit {

// Sets the worker count for parallel loops (<= 0 means all logical cores).
// Results never depend on this value.
void set_thread_count(int n);
int thread_count();

}  // namespace skullkit
