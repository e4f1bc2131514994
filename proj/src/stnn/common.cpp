#include "stnn/common.hpp"

#include <cstdlib>

namespace stnn {

int thread_cap() {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw < 1) hw = 1;
  if (const char* env = std::getenv("SF_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1 && v < 1024) {
      return static_cast<int>(v) < hw ? static_cast<int>(v) : hw;
    }
  }
  return hw;
}

}  // namespace stnn
