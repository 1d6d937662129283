#pragma once

#include "o3srl/mixture.hpp"

#include <json.hpp>

#include <string>

namespace o3srl {

using Json = nlohmann::ordered_json;

/// {"num_states", "num_actions", "gamma", "kappa", "mu", "transition", "reward", "cost"};
/// arrays are row-major with states outermost: transition[s][a][s'].
Json cmdp_to_json(const Cmdp& cmdp);

/// Parses and validates; throws ValidationError on malformed input.
Cmdp cmdp_from_json(const Json& doc);

Cmdp load_cmdp(const std::string& path);
void save_cmdp(const Cmdp& cmdp, const std::string& path);

Json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const Json& rows, const std::string& what);

Json policy_to_json(const TabularPolicy& policy);
Json mixture_to_json(const PolicyMixture& mixture);

/// Shortest decimal form that parses back to the same double.
std::string format_double(double value);

/// Writes `text` to `path`, creating parent directories.
void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace o3srl
