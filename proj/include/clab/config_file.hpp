#pragma once

#include <string>

#include "clab/autophagy.hpp"

namespace clab {

// Flat `key = value` experiment configuration with `#` comments. Unknown keys
// are hard errors. Omitted keys keep ExperimentConfig defaults; seq_len also
// sets the model's context window and the perplexity window length.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

}  // namespace clab
