#include "gptree/parallel.hpp"

#include <cstdlib>
#include <string>

namespace gptree {

int default_worker_count() {
    const char* env = std::getenv("GPTREE_WORKERS");
    if (env == nullptr) return 1;
    try {
        const int n = std::stoi(env);
        return n > 0 ? n : 1;
    } catch (...) {
        return 1;
    }
}

}  // namespace gptree
