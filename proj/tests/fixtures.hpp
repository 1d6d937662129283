#pragma once

#include "o3srl/experiment.hpp"

#include <string>

namespace o3srl::test {

/// Config naming only a shipped environment fixture.
inline ExperimentConfig fixture_config(const std::string& name) { return parse_config(Json{{"env", name}}); }

/// Truth, default dataset and fitted model for a fixture.
inline Instance fixture_instance(const std::string& name, std::uint64_t seed = 0) {
  const ExperimentConfig config = fixture_config(name);
  return prepare_instance(config, build_cmdp(config), seed);
}

}  // namespace o3srl::test
