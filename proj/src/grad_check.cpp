#include "hrctc/grad_check.h"

#include <algorithm>
#include <cmath>

#include "hrctc/error.h"

namespace hrctc {

double evaluate(const ScalarFn& f, const ParamStore& params) {
  Tape tape;
  const double value = f(tape, params).value().item();
  if (!std::isfinite(value)) throw NumericError("non-finite loss during gradient probing");
  return value;
}

GradCheckReport grad_check(const ScalarFn& f, const ParamStore& params, double eps) {
  if (!(eps > 0.0)) throw ArgumentError("grad_check: eps must be positive");

  Gradients analytic;
  {
    Tape tape;
    Var loss = f(tape, params);
    analytic = tape.backward(loss, params);
  }

  GradCheckReport report;
  ParamStore probe = params;
  for (const auto& name : params.names()) {
    const Tensor& grad = analytic.at(name);
    auto values = probe.values(name);
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = evaluate(f, probe);
      values[i] = saved - eps;
      const double down = evaluate(f, probe);
      values[i] = saved;

      const double numeric = (up - down) / (2.0 * eps);
      const double exact = grad.data()[i];
      const double denom = std::max({1.0, std::abs(exact), std::abs(numeric)});
      const double err = std::abs(exact - numeric) / denom;
      ++report.num_checked;
      if (report.num_checked == 1 || err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_param = name;
        report.worst_index = i;
      }
    }
  }
  return report;
}

}  // namespace hrctc
