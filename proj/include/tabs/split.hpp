#pragma once

#include <cstdint>
#include <vector>

#include "tabs/common.hpp"

namespace tabs {

struct SplitResult {
  std::vector<std::size_t> train, val, test;
};

// 3:1:1 train/val/test split stratified over quintile bins of the covariate.
// Totals are floor(0.6n) / floor(0.2n) / remainder; within each bin the
// subjects are shuffled deterministically and assigned from one global
// maximally even T/V/S sequence, so per-bin proportions stay within one
// subject of 3:1:1. Deterministic in (covariates, seed).
SplitResult split_dataset(const std::vector<double>& covariates, std::uint64_t seed);

}  // namespace tabs
