#include "zsar/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "zsar/errors.hpp"

namespace zsar::gradcheck {

namespace {

double evaluate(const Objective& f, std::size_t param, std::size_t element) {
    ag::NoGradGuard guard;
    const double v = f().value().item();
    if (!std::isfinite(v)) {
        throw NumericDomainError(
            fmt::format("gradcheck: objective not finite after perturbing parameter {} element {}", param, element));
    }
    return v;
}

}  // namespace

std::string format_report(const GradReport& r) {
    return fmt::format("{:<28} max_rel={:.3e} max_abs={:.3e} params={} kink_dist={:.3e} {}", r.op_name, r.max_rel_error,
                       r.max_abs_error, r.checked_params, r.kink_distance, r.passed() ? "PASS" : "FAIL");
}

GradReport check_gradient(const std::string& op_name, const Objective& f, std::span<const ag::Var> params, double step) {
    if (!(step > 0.0)) throw ParameterError(fmt::format("gradcheck: step {} must be positive", step));

    ag::kink::reset();
    for (const auto& p : params) p.zero_grad();
    const ag::Var out = f();
    if (!std::isfinite(out.value().item())) throw NumericDomainError("gradcheck: objective not finite at base point");
    ag::backward(out);

    GradReport report;
    report.op_name = op_name;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        ag::Var leaf = params[pi];
        const Tensor analytic = leaf.grad().empty() ? Tensor(leaf.shape()) : leaf.grad();
        Tensor& value = leaf.mutable_value();
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double orig = value[i];
            value[i] = orig + step;
            double plus, minus;
            try {
                plus = evaluate(f, pi, i);
                value[i] = orig - step;
                minus = evaluate(f, pi, i);
            } catch (...) {
                value[i] = orig;
                throw;
            }
            value[i] = orig;
            const double fd = (plus - minus) / (2.0 * step);
            const double abs_err = std::abs(analytic[i] - fd);
            const double rel_err = abs_err / std::max(1e-8, std::abs(analytic[i]) + std::abs(fd));
            report.max_abs_error = std::max(report.max_abs_error, abs_err);
            report.max_rel_error = std::max(report.max_rel_error, rel_err);
            ++report.checked_params;
        }
    }
    report.kink_distance = ag::kink::min_distance();
    return report;
}

GradReport check_avoiding_kinks(const std::string& op_name, const InstanceFactory& factory, RngStream rng, double step,
                                std::size_t max_attempts) {
    for (std::size_t attempt = 1; attempt <= max_attempts; ++attempt) {
        Instance inst = factory(rng);
        GradReport r = check_gradient(op_name, inst.objective, inst.params, step);
        if (r.kink_distance >= kKinkMargin) {
            r.attempts = attempt;
            return r;
        }
    }
    throw std::runtime_error(fmt::format("gradcheck {}: every one of {} draws sat on a kink", op_name, max_attempts));
}

}  // namespace zsar::gradcheck
