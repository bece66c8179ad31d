#include "skullkit/parallel.hpp"

#include <algorithm>

#include <omp.h>

#include <thread>

namespace skullkit {

void set_thread_count(int n) {
  if (n <= 0) n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  omp_set_num_threads(n);
}

int thread_count() { return omp_get_max_threads(); }

}  // namespace skullkit
