#include "o3srl/io.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace o3srl {

namespace {

const Json& require(const Json& doc, const char* key) {
  if (!doc.is_object() || !doc.contains(key)) throw ValidationError(std::string("cmdp json: missing field '") + key + "'");
  return doc.at(key);
}

double as_number(const Json& v, const std::string& what) {
  if (!v.is_number()) throw ValidationError(what + ": expected a number");
  return v.get<double>();
}

}  // namespace

Json matrix_to_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const Json& rows, const std::string& what) {
  if (!rows.is_array() || rows.empty()) throw ValidationError(what + ": expected a non-empty array of rows");
  const auto n = static_cast<Index>(rows.size());
  if (!rows[0].is_array()) throw ValidationError(what + ": expected rows to be arrays");
  const auto m = static_cast<Index>(rows[0].size());
  Eigen::MatrixXd out(n, m);
  for (Index i = 0; i < n; ++i) {
    const Json& row = rows[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Index>(row.size()) != m) throw ValidationError(what + ": ragged rows");
    for (Index j = 0; j < m; ++j) out(i, j) = as_number(row[static_cast<std::size_t>(j)], what);
  }
  return out;
}

Json cmdp_to_json(const Cmdp& cmdp) {
  Json doc;
  doc["num_states"] = cmdp.num_states();
  doc["num_actions"] = cmdp.num_actions();
  doc["gamma"] = cmdp.gamma;
  doc["kappa"] = cmdp.cost_limit;
  Json mu = Json::array();
  for (Index s = 0; s < cmdp.num_states(); ++s) mu.push_back(cmdp.initial_dist(s));
  doc["mu"] = std::move(mu);
  Json transition = Json::array();
  for (Index s = 0; s < cmdp.num_states(); ++s) {
    Json per_action = Json::array();
    for (Index a = 0; a < cmdp.num_actions(); ++a) {
      Json row = Json::array();
      const auto& P = cmdp.transition[static_cast<std::size_t>(a)];
      for (Index t = 0; t < cmdp.num_states(); ++t) row.push_back(P(s, t));
      per_action.push_back(std::move(row));
    }
    transition.push_back(std::move(per_action));
  }
  doc["transition"] = std::move(transition);
  doc["reward"] = matrix_to_json(cmdp.reward);
  doc["cost"] = matrix_to_json(cmdp.cost);
  return doc;
}

Cmdp cmdp_from_json(const Json& doc) {
  const Json& ns = require(doc, "num_states");
  const Json& na = require(doc, "num_actions");
  if (!ns.is_number_integer() || !na.is_number_integer() || ns.get<long long>() <= 0 || na.get<long long>() <= 0) {
    throw ValidationError("cmdp json: num_states and num_actions must be positive integers");
  }
  const auto S = static_cast<Index>(ns.get<long long>());
  const auto A = static_cast<Index>(na.get<long long>());

  Cmdp cmdp;
  cmdp.gamma = as_number(require(doc, "gamma"), "gamma");
  cmdp.cost_limit = as_number(require(doc, "kappa"), "kappa");

  const Json& mu = require(doc, "mu");
  if (!mu.is_array() || static_cast<Index>(mu.size()) != S) throw ValidationError("cmdp json: mu must have num_states entries");
  cmdp.initial_dist.resize(S);
  for (Index s = 0; s < S; ++s) cmdp.initial_dist(s) = as_number(mu[static_cast<std::size_t>(s)], "mu");

  const Json& tr = require(doc, "transition");
  if (!tr.is_array() || static_cast<Index>(tr.size()) != S) throw ValidationError("cmdp json: transition must have num_states entries");
  cmdp.transition.assign(static_cast<std::size_t>(A), Eigen::MatrixXd::Zero(S, S));
  for (Index s = 0; s < S; ++s) {
    const Json& per_action = tr[static_cast<std::size_t>(s)];
    if (!per_action.is_array() || static_cast<Index>(per_action.size()) != A) {
      throw ValidationError("cmdp json: transition[" + std::to_string(s) + "] must have num_actions rows");
    }
    for (Index a = 0; a < A; ++a) {
      const Json& row = per_action[static_cast<std::size_t>(a)];
      if (!row.is_array() || static_cast<Index>(row.size()) != S) {
        throw ValidationError("cmdp json: transition[" + std::to_string(s) + "][" + std::to_string(a) + "] must have num_states entries");
      }
      for (Index t = 0; t < S; ++t) cmdp.transition[static_cast<std::size_t>(a)](s, t) = as_number(row[static_cast<std::size_t>(t)], "transition");
    }
  }
  cmdp.reward = matrix_from_json(require(doc, "reward"), "reward");
  cmdp.cost = matrix_from_json(require(doc, "cost"), "cost");
  if (cmdp.reward.rows() != S || cmdp.reward.cols() != A) throw ValidationError("cmdp json: reward shape mismatch");
  if (cmdp.cost.rows() != S || cmdp.cost.cols() != A) throw ValidationError("cmdp json: cost shape mismatch");
  cmdp.validate();
  return cmdp;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

Cmdp load_cmdp(const std::string& path) {
  Json doc;
  try {
    doc = Json::parse(read_text_file(path));
  } catch (const Json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
  return cmdp_from_json(doc);
}

void save_cmdp(const Cmdp& cmdp, const std::string& path) { write_text_file(path, cmdp_to_json(cmdp).dump(1) + "\n"); }

Json policy_to_json(const TabularPolicy& policy) {
  const auto actions = policy.deterministic_actions();
  if (!actions.empty()) return Json{{"actions", actions}};
  return Json{{"action_probs", matrix_to_json(policy.action_probs)}};
}

Json mixture_to_json(const PolicyMixture& mixture) {
  Json doc;
  doc["count"] = mixture.count;
  doc["trimmed"] = mixture.trimmed;
  doc["mean_occupancy"] = matrix_to_json(mixture.mean_occupancy);
  Json support = Json::array();
  for (const auto& [policy, weight] : mixture.support) {
    Json entry = policy_to_json(policy);
    entry["weight"] = weight;
    support.push_back(std::move(entry));
  }
  doc["support"] = std::move(support);
  return doc;
}

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

}  // namespace o3srl
