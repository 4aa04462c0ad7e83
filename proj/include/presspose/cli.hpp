#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace presspose {

// Worker-thread cap from TPL_NUM_THREADS (default 1, clamped to hardware
// concurrency). The current kernels run on the calling thread only, so any
// cap >= 1 is already honored; the value is still validated and reported.
int worker_thread_cap();

// One command-line invocation, runnable in-process. args excludes the
// program name. Returns the exit code: 0 success, 1 validation failure or
// bad usage, 2 I/O failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

}  // namespace presspose
