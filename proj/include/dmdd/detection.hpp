#pragma once

#include <vector>

#include "dmdd/signal.hpp"

namespace dmdd {

struct Detection {
  std::size_t index = 0;
  double range = 0.0;
  double power_db = 0.0;
  double margin_db = 0.0;
};

/// Processing gain 10 log10(N_p).
double integration_gain_db(double coherent_samples);

/// Constant-threshold detector: P(q) = 10 log10(|mu_q|^2 / sigma_w^2) is
/// declared when P(q) >= T_h - 10 log10(N_p). `grid` supplies ranges; when
/// null the range field holds the grid index.
std::vector<Detection> threshold_detect(const CVector& mu, double noise_var, double threshold_db,
                                        double coherent_samples, const RangeGrid* grid = nullptr);

}  // namespace dmdd
