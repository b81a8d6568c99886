#pragma once

#include <functional>

namespace timecast {

// Number of worker threads (env TIMECAST_THREADS, else hardware concurrency).
int worker_count();

// Runs fn(task) for task in [0, n_tasks). Tasks must write disjoint outputs;
// under that contract the result is independent of scheduling and thread
// count, which is what keeps training and sampling bit-reproducible.
void parallel_tasks(int n_tasks, const std::function<void(int)>& fn);

}  // namespace timecast
