#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include "evasim/errors.hpp"
#include "evasim/model.hpp"

namespace evasim {

// Hourly financial outcome under performance-based regulation compensation.
// Market quantities are in MWh/MW here; the engine converts from kWh.
struct SettlementRecord {
  int hour = 0;
  double energy_cost = 0.0;        // $
  double regulation_credit = 0.0;  // $
  double net_cost = 0.0;           // $ = energy_cost - regulation_credit
  double score = 1.0;              // performance score in [0,1]
  double mileage = 0.0;            // RegD mileage of the hour
};

// Mileage: total absolute movement of the RegD signal over the hour.
inline double mileage(const RegDTrace& trace) {
  double m = 0.0;
  for (std::size_t g = 1; g < trace.samples.size(); ++g)
    m += std::abs(trace.samples[g] - trace.samples[g - 1]);
  return m;
}

// Normalized absolute-error precision score: 1 for a perfect response, 0 for
// no response, clamped into [0,1]. An hour with no instruction scores 1.
inline double performance_score(std::span<const double> instructed,
                                std::span<const double> delivered) {
  if (instructed.size() != delivered.size())
    throw InvalidParameter("performance_score: series lengths differ (" +
                           std::to_string(instructed.size()) + " vs " +
                           std::to_string(delivered.size()) + ")");
  double err = 0.0, norm = 0.0;
  for (std::size_t g = 0; g < instructed.size(); ++g) {
    err += std::abs(delivered[g] - instructed[g]);
    norm += std::abs(instructed[g]);
  }
  if (norm == 0.0) return 1.0;
  const double score = 1.0 - err / norm;
  return std::min(1.0, std::max(0.0, score));
}

// Credit = B * score * (mu_rc + mileage * mu_rp): both the capacity and the
// performance components scale with the realized score, mirroring
// performance-scaled settlement.
inline SettlementRecord settle_hour(double cleared_mwh, double score,
                                    double mileage_value,
                                    const PriceRecord& prices,
                                    double delivered_mwh) {
  if (cleared_mwh < 0.0 || delivered_mwh < 0.0 || score < 0.0 || score > 1.0 ||
      mileage_value < 0.0)
    throw InvalidParameter("settle_hour: inputs outside their ranges");
  SettlementRecord rec;
  rec.hour = prices.step;
  rec.score = score;
  rec.mileage = mileage_value;
  rec.energy_cost = prices.lambda * delivered_mwh;
  rec.regulation_credit = cleared_mwh * score * prices.mu_rc +
                          cleared_mwh * score * mileage_value * prices.mu_rp;
  rec.net_cost = rec.energy_cost - rec.regulation_credit;
  return rec;
}

}  // namespace evasim
