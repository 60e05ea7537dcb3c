#include "urmf/autodiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace urmf::ad {
namespace {

double evaluate(const LossBuilder& f) {
  Tape tape(false);
  return f(tape).value().item();
}

}  // namespace

std::string GradcheckReport::worst_parameter() const {
  auto it = std::max_element(parameters.begin(), parameters.end(),
                             [](const auto& a, const auto& b) { return a.max_rel_error < b.max_rel_error; });
  return it == parameters.end() ? std::string{} : it->name;
}

double gradient_rel_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradcheckReport finite_diff_check(const LossBuilder& f, std::span<Parameter* const> params,
                                  double step, double tol) {
  for (Parameter* p : params) p->zero_grad();

  const double base = evaluate(f);
  if (const double again = evaluate(f); again != base) {
    throw DeterminismError("loss is not deterministic: repeated evaluation gave " +
                           std::to_string(base) + " then " + std::to_string(again));
  }
  {
    Tape tape;
    Var loss = f(tape);
    if (loss.value().item() != base) {
      throw DeterminismError("loss differs between recording and non-recording evaluation");
    }
    tape.backward(loss);
  }

  GradcheckReport report;
  report.tolerance = tol;
  for (Parameter* p : params) {
    ParameterCheck check;
    check.name = p->name;
    for (std::size_t i = 0; i < p->value.numel(); ++i) {
      const double original = p->value[i];
      p->value[i] = original + step;
      const double plus = evaluate(f);
      p->value[i] = original - step;
      const double minus = evaluate(f);
      p->value[i] = original;
      const double numeric = (plus - minus) / (2.0 * step);
      const double analytic = p->grad[i];
      const double err = gradient_rel_error(analytic, numeric);
      if (i == 0 || err > check.max_rel_error) {
        check.max_rel_error = err;
        check.worst_index = i;
        check.analytic = analytic;
        check.numeric = numeric;
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, check.max_rel_error);
    report.parameters.push_back(std::move(check));
  }
  for (Parameter* p : params) p->zero_grad();
  report.passed = report.max_rel_error <= tol;
  return report;
}

}  // namespace urmf::ad
