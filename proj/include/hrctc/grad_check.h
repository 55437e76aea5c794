#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "hrctc/autodiff.h"
#include "hrctc/param_store.h"

namespace hrctc {

// Builds a scalar loss on `tape` from the parameters in `params`.
using ScalarFn = std::function<Var(Tape& tape, const ParamStore& params)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t num_checked = 0;
};

// Compares reverse-mode gradients of `f` against central finite differences
// for every scalar in `params`. The relative error of one entry is
// |analytic - numeric| / max(1, |analytic|, |numeric|).
// Throws NumericError if a probe produces a non-finite loss.
GradCheckReport grad_check(const ScalarFn& f, const ParamStore& params, double eps = 1e-5);

// Evaluates `f` once and returns the scalar value.
double evaluate(const ScalarFn& f, const ParamStore& params);

}  // namespace hrctc
