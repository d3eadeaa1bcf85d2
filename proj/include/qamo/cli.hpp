#pragma once

namespace qamo::cli {

// Process exit codes, one per error category.
enum ExitCode : int {
    kOk = 0,
    kInternal = 1,
    kUsage = 2,
    kConfig = 3,
    kIo = 4,
    kDivergence = 5,
    kData = 6,
};

// Entry point for the `qamo` tool: gen, train, score, eval, ablate, export.
int run(int argc, char** argv);

}  // namespace qamo::cli
