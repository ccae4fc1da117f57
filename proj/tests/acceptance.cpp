// Acceptance gate: runs every end-to-end criterion and prints one
// pass/fail line per criterion. Nonzero exit if anything fails.
#include <cstdio>

#include "mwalk/verify.hpp"

int main() {
    auto results = mw::run_acceptance(1);
    int failed = 0;
    for (const auto& r : results) {
        std::printf("criterion %d [%s] %s: %s (%.1fs)\n", r.id,
                    r.pass ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str(),
                    r.seconds);
        std::fflush(stdout);
        if (!r.pass) ++failed;
    }
    if (failed) std::printf("%d criterion(s) failed\n", failed);
    return failed ? 1 : 0;
}
