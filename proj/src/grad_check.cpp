#include "sdan/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sdan/errors.hpp"

namespace sdan {

namespace {

double evaluate(const std::function<ag::Var()>& closure) {
  ag::NoGradGuard guard;
  const double v = closure().value().flat(0);
  if (!std::isfinite(v)) {
    throw NumericError("grad_check: closure produced a non-finite value");
  }
  return v;
}

}  // namespace

GradCheckReport grad_check(const std::string& op_name,
                           const std::function<ag::Var()>& closure,
                           std::span<ag::Var> leaves, double tolerance,
                           double step) {
  GradCheckReport report;
  report.op_name = op_name;
  report.tolerance = tolerance;

  for (ag::Var& leaf : leaves) leaf.zero_grad();
  ag::Var loss = closure();
  if (!std::isfinite(loss.value().flat(0))) {
    throw NumericError("grad_check(" + op_name + "): non-finite loss");
  }
  ag::backward(loss);

  for (std::size_t li = 0; li < leaves.size(); ++li) {
    ag::Var& leaf = leaves[li];
    const Tensor analytic = leaf.grad();
    if (!analytic.all_finite()) {
      throw NumericError("grad_check(" + op_name + "): non-finite gradient in leaf " +
                         std::to_string(li));
    }
    Tensor& value = leaf.mutable_value();
    for (std::size_t i = 0; i < value.numel(); ++i) {
      const double original = value.flat(i);
      value.set_flat(i, original + step);
      const double plus = evaluate(closure);
      value.set_flat(i, original - step);
      const double minus = evaluate(closure);
      value.set_flat(i, original);

      const double numeric = (plus - minus) / (2.0 * step);
      const double a = analytic.flat(i);
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      ++report.checked;
      if (report.checked == 1 || rel > report.max_rel_err) {
        report.max_rel_err = rel;
        std::ostringstream os;
        os << li << '[' << i << "] analytic=" << a << " numeric=" << numeric;
        report.worst_entry = os.str();
      }
    }
  }
  report.passed = report.max_rel_err <= tolerance;
  return report;
}

GradCheckReport grad_check(
    const std::string& op_name,
    const std::function<ag::Var(std::span<const ag::Var>)>& op,
    const std::vector<Tensor>& inputs, double tolerance, double step) {
  std::vector<ag::Var> leaves;
  for (const Tensor& t : inputs) {
    if (t.dtype() != DType::f64) {
      throw UsageError("grad_check(" + op_name + "): inputs must be f64");
    }
    leaves.emplace_back(t, true);
  }
  auto closure = [&]() { return op(leaves); };
  return grad_check(op_name, closure, leaves, tolerance, step);
}

}  // namespace sdan
