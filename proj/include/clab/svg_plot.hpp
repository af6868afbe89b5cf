#pragma once

#include <string>
#include <vector>

#include "clab/autophagy.hpp"

namespace clab {

// Two-panel figure: effective rank vs generation (linear y) and perplexity vs
// generation (log y). Pass mncis = nullptr for a single-series plot. Output is
// deterministic byte-for-byte for identical inputs. Trajectories need at
// least two points each.
std::string render_plot_svg(const std::vector<GenerationRecord>& baseline,
                            const std::vector<GenerationRecord>* mncis);

void render_plot(const std::vector<GenerationRecord>& baseline,
                 const std::vector<GenerationRecord>* mncis, const std::string& path);

}  // namespace clab
