#pragma once

#include <cstdint>
#include <vector>

#include "revgan/tensor.hpp"

namespace revgan {

/// Exact minimum-cost transport between integer supplies and demands with
/// equal totals, solved as a min-cost flow by successive shortest paths.
/// cost is supply.size() x demand.size(); entries must be nonnegative.
/// Returns the total cost sum_ij flow_ij * cost_ij.
double min_cost_transport(const std::vector<std::int64_t>& supply, const std::vector<std::int64_t>& demand,
                          const Matrix& cost);

}  // namespace revgan
