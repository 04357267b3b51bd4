#include "griduq/threads.hpp"

#include <cstdlib>
#include <string>

#include <omp.h>

#include "griduq/log.hpp"

namespace griduq {

int configure_threads(bool deterministic) {
  int threads = omp_get_num_procs();
  if (const char* cap = std::getenv("GRIDUQ_THREADS")) {
    try {
      const int n = std::stoi(cap);
      if (n >= 1 && n < threads) threads = n;
    } catch (const std::exception&) {
      warn(std::string("ignoring unparseable GRIDUQ_THREADS=") + cap);
    }
  }
  if (deterministic) threads = 1;
  omp_set_num_threads(threads);
  return threads;
}

}  // namespace griduq
