#include "hrctc/decode.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "hrctc/ctc.h"
#include "hrctc/error.h"
#include "hrctc/frontend.h"

namespace hrctc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

bool better(const Hypothesis& a, const Hypothesis& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.tokens < b.tokens;
}

}  // namespace

Tensor prior_normalize(const Tensor& log_post, std::span<const double> prior, double alpha) {
  if (prior.size() != log_post.cols()) {
    throw ShapeError("prior has " + std::to_string(prior.size()) + " entries for " +
                     std::to_string(log_post.cols()) + " labels");
  }
  Tensor scores = log_post;
  if (alpha == 0.0) return scores;
  for (std::size_t k = 0; k < prior.size(); ++k) {
    if (!(prior[k] > 0.0)) throw ArgumentError("prior must be strictly positive");
  }
  for (std::size_t t = 0; t < scores.rows(); ++t) {
    for (std::size_t k = 0; k < scores.cols(); ++k) scores(t, k) -= alpha * std::log(prior[k]);
  }
  return scores;
}

Hypothesis greedy_decode(const Tensor& scores) {
  Hypothesis hyp;
  std::vector<int> path(scores.rows());
  for (std::size_t t = 0; t < scores.rows(); ++t) {
    auto row = scores.row(t);
    const auto best = std::max_element(row.begin(), row.end());  // first maximum
    path[t] = static_cast<int>(best - row.begin());
    hyp.score += *best;
  }
  hyp.tokens = collapse(path);
  return hyp;
}

std::vector<Hypothesis> prefix_beam_decode(const Tensor& scores, std::size_t beam_width) {
  if (beam_width == 0) throw ArgumentError("beam_width must be >= 1");
  struct Entry {
    double blank = kNegInf;
    double label = kNegInf;
    double total() const { return log_add(blank, label); }
  };
  using Beam = std::map<std::vector<int>, Entry>;

  Beam beam;
  beam[{}].blank = 0.0;
  for (std::size_t t = 0; t < scores.rows(); ++t) {
    Beam next;
    for (const auto& [prefix, entry] : beam) {
      const double stay_blank = scores(t, kBlank);
      Entry& same = next[prefix];
      same.blank = log_add(same.blank, entry.total() + stay_blank);
      for (std::size_t k = 1; k < scores.cols(); ++k) {
        const int label = static_cast<int>(k);
        const double s = scores(t, k);
        std::vector<int> extended = prefix;
        extended.push_back(label);
        Entry& ext = next[extended];
        if (!prefix.empty() && prefix.back() == label) {
          // Repeat without an intervening blank collapses into the prefix.
          ext.label = log_add(ext.label, entry.blank + s);
          Entry& self = next[prefix];
          self.label = log_add(self.label, entry.label + s);
        } else {
          ext.label = log_add(ext.label, entry.total() + s);
        }
      }
    }

    if (next.size() > beam_width) {
      std::vector<std::pair<std::vector<int>, Entry>> ranked(next.begin(), next.end());
      std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        const double sa = a.second.total(), sb = b.second.total();
        if (sa != sb) return sa > sb;
        return a.first < b.first;
      });
      ranked.resize(beam_width);
      next = Beam(std::make_move_iterator(ranked.begin()), std::make_move_iterator(ranked.end()));
    }
    beam = std::move(next);
  }

  std::vector<Hypothesis> out;
  out.reserve(beam.size());
  for (const auto& [prefix, entry] : beam) out.push_back({prefix, entry.total()});
  std::stable_sort(out.begin(), out.end(), better);
  return out;
}

std::vector<Hypothesis> prefix_beam_decode(const Posteriorgram& pg, std::size_t beam_width,
                                           std::span<const double> prior, double alpha) {
  return prefix_beam_decode(prior_normalize(pg.log_post, prior, alpha), beam_width);
}

EditStats& EditStats::operator+=(const EditStats& other) {
  substitutions += other.substitutions;
  deletions += other.deletions;
  insertions += other.insertions;
  ref_length += other.ref_length;
  return *this;
}

namespace {

enum class Op { match, substitute, remove, insert };

// Levenshtein table plus backtrace; ops listed in reference order.
std::vector<Op> align(std::span<const int> hyp, std::span<const int> ref) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::size_t> cost((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return cost[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t diag = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }

  std::vector<Op> ops;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      ops.push_back(ref[i - 1] == hyp[j - 1] ? Op::match : Op::substitute);
      --i;
      --j;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ops.push_back(Op::remove);
      --i;
    } else {
      ops.push_back(Op::insert);
      --j;
    }
  }
  std::reverse(ops.begin(), ops.end());
  return ops;
}

}  // namespace

EditStats token_error_rate(std::span<const int> hyp, std::span<const int> ref) {
  if (ref.empty()) throw ArgumentError("token_error_rate needs a non-empty reference");
  EditStats stats;
  stats.ref_length = ref.size();
  for (Op op : align(hyp, ref)) {
    switch (op) {
      case Op::match: break;
      case Op::substitute: ++stats.substitutions; break;
      case Op::remove: ++stats.deletions; break;
      case Op::insert: ++stats.insertions; break;
    }
  }
  return stats;
}

std::string render_alignment(std::span<const int> hyp, std::span<const int> ref,
                             const std::vector<std::string>& symbols) {
  auto name = [&](int id) {
    return id >= 0 && static_cast<std::size_t>(id) < symbols.size() ? symbols[static_cast<std::size_t>(id)]
                                                                    : std::to_string(id);
  };
  std::ostringstream r, h, o;
  r << "REF:";
  h << "HYP:";
  o << "    ";
  std::size_t i = 0, j = 0;
  for (Op op : align(hyp, ref)) {
    std::string rs = "*", hs = "*", os;
    switch (op) {
      case Op::match: rs = name(ref[i++]); hs = name(hyp[j++]); break;
      case Op::substitute: rs = name(ref[i++]); hs = name(hyp[j++]); os = "S"; break;
      case Op::remove: rs = name(ref[i++]); os = "D"; break;
      case Op::insert: hs = name(hyp[j++]); os = "I"; break;
    }
    const std::size_t width = std::max(rs.size(), hs.size());
    r << ' ' << rs << std::string(width - rs.size(), ' ');
    h << ' ' << hs << std::string(width - hs.size(), ' ');
    o << ' ' << os << std::string(width - os.size(), ' ');
  }
  return r.str() + "\n" + h.str() + "\n" + o.str() + "\n";
}

}  // namespace hrctc
