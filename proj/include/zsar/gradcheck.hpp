#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "zsar/autograd.hpp"
#include "zsar/rng.hpp"

namespace zsar::gradcheck {

inline constexpr double kDefaultStep = 1e-5;
inline constexpr double kTolerance = 1e-4;
// Closer than this to an interpolation integer or a clamp bound counts as
// sitting on a kink.
inline constexpr double kKinkMargin = 1e-3;

struct GradReport {
    std::string op_name;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::size_t checked_params = 0;
    // Smallest kink distance seen across the base and perturbed evaluations.
    double kink_distance = 0.0;
    // Instances drawn before one cleared the kink margin (1 = first try).
    std::size_t attempts = 1;

    bool passed(double tolerance = kTolerance) const { return max_rel_error < tolerance; }
};

std::string format_report(const GradReport& report);

// The scalar objective, rebuilt from the current leaf values on every call.
using Objective = std::function<ag::Var()>;

// Central differences (f(x+h) - f(x-h)) / 2h for every scalar of every
// parameter against the reverse-mode gradient. Relative error per scalar is
// |g_a - g_fd| / max(1e-8, |g_a| + |g_fd|). Throws ParameterError for
// step <= 0 and NumericDomainError (naming parameter and element) when an
// evaluation is not finite. Parameter values are restored afterwards.
GradReport check_gradient(const std::string& op_name, const Objective& f, std::span<const ag::Var> params,
                          double step = kDefaultStep);

struct Instance {
    Objective objective;
    std::vector<ag::Var> params;
};
using InstanceFactory = std::function<Instance(RngStream& rng)>;

// Draws instances until one stays at least kKinkMargin from every kink in
// all evaluations, then returns its report. Throws std::runtime_error after
// max_attempts kinked draws.
GradReport check_avoiding_kinks(const std::string& op_name, const InstanceFactory& factory, RngStream rng,
                                double step = kDefaultStep, std::size_t max_attempts = 50);

}  // namespace zsar::gradcheck
