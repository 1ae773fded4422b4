#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sdan/autograd.hpp"

namespace sdan {

struct GradCheckReport {
  std::string op_name;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::size_t checked = 0;  // number of scalar entries compared
  std::string worst_entry;  // "<leaf index>[<flat index>] analytic=.. numeric=.."
};

inline constexpr double kFiniteDifferenceStep = 1e-3;

// Compares reverse-mode gradients of `closure` w.r.t. every element of
// `leaves` against central differences. The closure must rebuild the graph
// from the leaves on every call and return a scalar. Leaves are perturbed in
// place and restored. Relative error uses max(|a|, |b|, 1e-8) as denominator.
GradCheckReport grad_check(const std::string& op_name,
                           const std::function<ag::Var()>& closure,
                           std::span<ag::Var> leaves, double tolerance,
                           double step = kFiniteDifferenceStep);

// Convenience form: wraps `inputs` (which must be f64) as fresh leaves and
// hands them to `op`.
GradCheckReport grad_check(
    const std::string& op_name,
    const std::function<ag::Var(std::span<const ag::Var>)>& op,
    const std::vector<Tensor>& inputs, double tolerance,
    double step = kFiniteDifferenceStep);

}  // namespace sdan
