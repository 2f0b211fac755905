#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "zsar/gradcheck.hpp"

namespace zsar {

struct GradcheckCase {
    std::string name;
    gradcheck::InstanceFactory factory;
};

// One case per differentiable operation plus module compositions and the
// end-to-end total loss, all on small random shapes.
const std::vector<GradcheckCase>& gradcheck_cases();

// Runs every case whose name contains `filter` for seeds 1..seeds and merges
// the per-seed reports (worst error, total scalars checked, smallest kink
// distance).
std::vector<gradcheck::GradReport> run_gradcheck_suite(std::size_t seeds, const std::string& filter = "");

}  // namespace zsar
