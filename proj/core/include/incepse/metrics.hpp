#pragma once

#include <optional>
#include <vector>

#include "incepse/tensor.hpp"

namespace incepse::metrics {

/// Rank-based AUROC (Mann-Whitney with midranks for ties): the probability
/// that a random positive outranks a random negative, ties counting 1/2.
/// Returns nullopt when the labels are single-class (undefined, distinct
/// from 0).
std::optional<double> auroc_binary(const std::vector<double>& scores,
                                   const std::vector<int>& labels);

struct MacroAuroc {
  double value = 0.0;
  std::vector<int> skipped_classes; // classes lacking a positive or a negative
  std::vector<std::optional<double>> per_class;
};

/// Unweighted mean of per-class AUROC over classes with both a positive and
/// a negative; degenerate classes are excluded and reported. scores and
/// labels are [N,C]; labels must be exactly 0 or 1. Throws when every class
/// is skipped.
MacroAuroc macro_auroc(const Tensor& scores, const Tensor& labels);

} // namespace incepse::metrics
