#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace gmfc {

// CLI orchestration: config ingestion, task dispatch, artifact and
// manifest persistence. Exit codes: 0 success, 2 invalid config,
// 3 numerical failure (blow-up), 4 flagged non-convergence.
struct RunOptions {
    std::string config_path;
    std::string out_dir;  // empty: use config's output.dir, else "runs/<task>"
    int threads = 0;      // 0: library default
};

int run_task(const RunOptions& options, std::ostream& diagnostics);
int describe_task(const std::string& task, std::ostream& out);
const std::vector<std::string>& task_names();

}  // namespace gmfc
