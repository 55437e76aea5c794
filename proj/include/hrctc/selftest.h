#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "hrctc/grad_check.h"
#include "hrctc/heads.h"

namespace hrctc {

// Finite-difference check of the full model (BiLSTM encoder, head, CTC) on
// one synthetic utterance with every parameter redrawn from U(-0.5, 0.5).
// `tiny` uses a 2-layer encoder with hidden size 6 and K = 3.
struct ModelCheckOptions {
  HeadKind head = HeadKind::highrank;
  std::uint64_t seed = 1;
  bool tiny = true;
  double eps = 1e-5;
};

GradCheckReport model_gradient_check(const ModelCheckOptions& options);

// Compares ctc_loss against brute-force enumeration on random feasible
// instances with T <= max_frames and K <= max_labels.
struct OracleReport {
  std::size_t cases = 0;
  double max_rel_error = 0.0;
};

OracleReport ctc_oracle_suite(std::size_t cases, std::uint64_t seed, std::size_t max_frames = 6,
                              std::size_t max_labels = 4);

}  // namespace hrctc
