#pragma once
// Wall-following navigation baselines on the same embodiment as the learned
// agent: fixed left/right followers and a clairvoyant variant that forks a
// simulation at every wall encounter to pick the better follow direction.

#include <string>
#include <vector>

#include "navlab/env.hpp"

namespace navlab {

enum class BugVariant { Left, Right, Clairvoyant };

struct BugError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Drive one episode with the given variant. The agent only uses its pose,
// the goal, and contact probes (disc casts); the clairvoyant variant is
// additionally allowed geodesic lookups when choosing a follow direction.
Trajectory bug_run(const OccupancyGrid& grid, const Episode& episode,
                   BugVariant variant);

// Per-episode rows plus bootstrap-aggregated summary lines, all variants on
// the identical episode set. grids[i] hosts episodes[i].
std::string bug_benchmark(const std::vector<const OccupancyGrid*>& grids,
                          const std::vector<Episode>& episodes,
                          const std::vector<BugVariant>& variants,
                          std::uint64_t bootstrap_seed = 0);

const char* bug_variant_name(BugVariant v);

}  // namespace navlab
