#include "incepse/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "incepse/errors.hpp"

namespace incepse::metrics {

std::optional<double> auroc_binary(const std::vector<double>& scores,
                                   const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    fail_validation("auroc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::size_t positives = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) fail_validation("auroc: labels must be 0 or 1");
    positives += static_cast<std::size_t>(y);
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) return std::nullopt;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&scores](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Midranks (1-based): tied values share the average of their rank span.
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k)
      if (labels[order[k]] == 1) rank_sum_pos += midrank;
    i = j + 1;
  }

  const double p = static_cast<double>(positives);
  const double u = rank_sum_pos - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(negatives));
}

MacroAuroc macro_auroc(const Tensor& scores, const Tensor& labels) {
  if (scores.rank() != 2 || !scores.same_shape(labels))
    fail_validation("macro_auroc: scores and labels must both be [N,C]");
  const std::int64_t n = scores.dim(0), c = scores.dim(1);
  if (n < 2) fail_validation("macro_auroc: need at least 2 rows");

  MacroAuroc result;
  double sum = 0.0;
  std::int64_t included = 0;
  std::vector<double> col_scores(static_cast<std::size_t>(n));
  std::vector<int> col_labels(static_cast<std::size_t>(n));
  for (std::int64_t j = 0; j < c; ++j) {
    for (std::int64_t i = 0; i < n; ++i) {
      col_scores[static_cast<std::size_t>(i)] = scores.at(i, j);
      const double y = labels.at(i, j);
      if (y != 0.0 && y != 1.0) fail_validation("macro_auroc: labels must be 0 or 1");
      col_labels[static_cast<std::size_t>(i)] = static_cast<int>(y);
    }
    auto a = auroc_binary(col_scores, col_labels);
    result.per_class.push_back(a);
    if (a.has_value()) {
      sum += *a;
      ++included;
    } else {
      result.skipped_classes.push_back(static_cast<int>(j));
    }
  }
  if (included == 0) fail_runtime("macro AUROC undefined: every class lacks a positive or a negative");
  result.value = sum / static_cast<double>(included);
  return result;
}

} // namespace incepse::metrics
