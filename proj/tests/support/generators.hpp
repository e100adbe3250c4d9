// SPDX-License-Identifier: Apache-2.0
// Hand-rolled random generators for property tests.
#pragma once

#include "tabreason/core.hpp"

#include <random>
#include <vector>

namespace gen
{

using Rng = std::mt19937_64;

/// A plan that satisfies every plan rule: distinct tools, the program
/// generator directly followed by the executor, the answer generator last.
tabreason::Trajectory valid_plan(Rng& rng);

/// Up to 8 tools drawn with replacement; usually invalid.
tabreason::Trajectory any_plan(Rng& rng);

/// Independent statement of the plan rules.
bool plan_is_valid(const std::vector<tabreason::ToolId>& steps);

/// A labeled record with a consistent state chain. Negative records may stop
/// early with a failure.
tabreason::TrajectoryRecord record(Rng& rng, std::size_t index);

std::vector<tabreason::TrajectoryRecord> records(Rng& rng, std::size_t count);

} // namespace gen
