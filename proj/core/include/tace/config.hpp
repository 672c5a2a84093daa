#pragma once

#include <string>

#include "tace/counterfactual.hpp"

namespace tace {

/// Applies `key = value` lines from a text file onto hp. Blank lines and
/// lines starting with '#' are skipped; unknown keys and unparsable values
/// throw. Keys mirror the HyperParams field names (e.g. lambda_lpips,
/// steps_invert, latent_lr).
void apply_config_file(HyperParams& hp, const std::string& path);

/// Applies environment overrides of the form TACE_<KEY> (field name
/// upper-cased), e.g. TACE_STEPS_CF=500. Overrides win over config files.
void apply_env_overrides(HyperParams& hp);

/// defaults -> optional config file -> environment
HyperParams load_hyperparams(const std::string& config_path = "");

/// The documented key list (one per HyperParams field).
std::vector<std::string> hyperparam_keys();

}  // namespace tace
