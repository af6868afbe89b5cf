#pragma once

#include <string>
#include <vector>

#include "clab/autophagy.hpp"

namespace clab {

inline constexpr const char* kTrajectoryHeader =
    "generation,effective_rank,perplexity,mean_lm_loss,mean_asnc_loss,distinct_2";

// CSV persistence of a trajectory (sample texts live in separate files).
// Reals are written with 17 significant digits; non-finite values are refused.
void write_trajectory(const std::vector<GenerationRecord>& records, const std::string& path);
std::vector<GenerationRecord> read_trajectory(const std::string& path);

}  // namespace clab
