#pragma once
// File formats:
//   longitudinal.csv : id,time,value
//   survival.csv     : id,event_time,event[,<covariate>...]
//   model config     : JSON {"model": {...}, "priors": {...}, "inits": {...}}
//   truth.json       : generating parameters, labels, random effects
// plus the fit artifacts (per-chain draws/stats CSVs, selection report,
// class draws/probabilities, pointwise log-likelihood, summary table).
// Numbers are serialized with 17 significant digits so round trips are exact.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "jlcm/labels.hpp"
#include "jlcm/modelsel.hpp"
#include "jlcm/nuts.hpp"
#include "jlcm/simulate.hpp"
#include "jlcm/types.hpp"
#include "jlcm/util.hpp"

namespace jlcm {

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

namespace detail {

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);  // binary: identical bytes on every platform
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  return out;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "' for reading");
  return in;
}

inline std::vector<std::string> split_csv_line(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return cells;
}

inline double parse_double(const std::string& cell, const std::string& where) {
  const char* begin = cell.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0')
    throw ConfigError(where + ": cannot parse number '" + cell + "'");
  return v;
}

}  // namespace detail

// Datasets ----------------------------------------------------------------------

inline void write_dataset_csvs(const Dataset& data, const std::string& longitudinal_path,
                               const std::string& survival_path) {
  std::vector<std::string> cov_names;
  if (!data.subjects.empty())
    for (const auto& kv : data.subjects.front().covariates) cov_names.push_back(kv.first);

  auto lon = detail::open_out(longitudinal_path);
  lon << "id,time,value\n";
  for (const auto& s : data.subjects)
    for (const auto& r : s.records)
      lon << s.id << ',' << format_double(r.time) << ',' << format_double(r.value) << '\n';

  auto sur = detail::open_out(survival_path);
  sur << "id,event_time,event";
  for (const auto& c : cov_names) sur << ',' << c;
  sur << '\n';
  for (const auto& s : data.subjects) {
    sur << s.id << ',' << format_double(s.event_time) << ',' << s.event;
    for (const auto& c : cov_names) sur << ',' << format_double(s.covariate(c));
    sur << '\n';
  }
}

inline Dataset load_dataset(const std::string& longitudinal_path,
                            const std::string& survival_path) {
  Dataset data;
  std::map<std::string, int> index;

  {
    auto in = detail::open_in(survival_path);
    std::string line;
    if (!std::getline(in, line)) throw ConfigError(survival_path + ": empty file");
    auto header = detail::split_csv_line(line);
    if (header.size() < 3 || header[0] != "id" || header[1] != "event_time" ||
        header[2] != "event")
      throw ConfigError(survival_path + ": header must start with id,event_time,event");
    std::vector<std::string> cov_names(header.begin() + 3, header.end());
    int lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line == "\r") continue;
      auto cells = detail::split_csv_line(line);
      std::string where = survival_path + ":" + std::to_string(lineno);
      if (cells.size() != header.size())
        throw ConfigError(where + ": expected " + std::to_string(header.size()) + " columns");
      if (index.count(cells[0])) throw ConfigError(where + ": duplicate subject id " + cells[0]);
      SubjectData subj;
      subj.id = cells[0];
      subj.event_time = detail::parse_double(cells[1], where);
      double ev = detail::parse_double(cells[2], where);
      if (ev != 0.0 && ev != 1.0) throw ConfigError(where + ": event must be 0 or 1");
      subj.event = static_cast<int>(ev);
      for (std::size_t c = 0; c < cov_names.size(); ++c)
        subj.covariates[cov_names[c]] = detail::parse_double(cells[3 + c], where);
      index[subj.id] = static_cast<int>(data.subjects.size());
      data.subjects.push_back(std::move(subj));
    }
  }

  {
    auto in = detail::open_in(longitudinal_path);
    std::string line;
    if (!std::getline(in, line)) throw ConfigError(longitudinal_path + ": empty file");
    auto header = detail::split_csv_line(line);
    if (header.size() != 3 || header[0] != "id" || header[1] != "time" || header[2] != "value")
      throw ConfigError(longitudinal_path + ": header must be id,time,value");
    int lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line == "\r") continue;
      auto cells = detail::split_csv_line(line);
      std::string where = longitudinal_path + ":" + std::to_string(lineno);
      if (cells.size() != 3) throw ConfigError(where + ": expected 3 columns");
      auto it = index.find(cells[0]);
      if (it == index.end())
        throw ConfigError(where + ": subject " + cells[0] + " missing from survival file");
      data.subjects[it->second].records.push_back(
          {detail::parse_double(cells[1], where), detail::parse_double(cells[2], where)});
    }
  }

  for (auto& s : data.subjects)
    std::stable_sort(s.records.begin(), s.records.end(),
                     [](const LongitudinalRecord& a, const LongitudinalRecord& b) {
                       return a.time < b.time;
                     });
  data.validate();
  return data;
}

// Model configuration -------------------------------------------------------------

struct ModelConfig {
  ModelSpec spec;
  PriorSpec priors;
  // chain index (1-based) -> parameter name -> constrained initial value
  std::map<int, std::map<std::string, double>> inits;
};

namespace detail {

inline Prior parse_prior(const nlohmann::json& j, const std::string& key) {
  if (!j.is_object() || !j.contains("family"))
    throw ConfigError("prior '" + key + "': expected an object with a 'family' field");
  std::string family = j.at("family").get<std::string>();
  auto num = [&](const char* field) {
    if (!j.contains(field))
      throw ConfigError("prior '" + key + "': missing field '" + field + "'");
    return j.at(field).get<double>();
  };
  if (family == "normal") return Prior::normal(num("mean"), num("sd"));
  if (family == "gamma") return Prior::gamma(num("shape"), num("rate"));
  if (family == "half_normal") return Prior::half_normal(num("scale"));
  if (family == "inverse_gamma") return Prior::inverse_gamma(num("shape"), num("scale"));
  throw ConfigError("prior '" + key + "': unknown family '" + family + "'");
}

inline std::vector<BasisTerm> parse_basis(const nlohmann::json& j, const std::string& key) {
  std::vector<BasisTerm> terms;
  for (const auto& item : j) terms.push_back(BasisTerm::parse(item.get<std::string>()));
  if (terms.empty()) throw ConfigError("model." + key + ": must be non-empty");
  return terms;
}

}  // namespace detail

inline ModelConfig parse_model_config(const std::string& text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: invalid JSON: ") + e.what());
  }
  try {
    ModelConfig config;
    if (!root.contains("model")) throw ConfigError("model config: missing 'model' section");
    const auto& m = root.at("model");
    config.spec.n_classes = m.at("n_classes").get<int>();
    config.spec.fixed_basis = detail::parse_basis(m.at("fixed_basis"), "fixed_basis");
    config.spec.random_basis = detail::parse_basis(m.at("random_basis"), "random_basis");
    if (m.contains("survival_covariates"))
      config.spec.survival_covariates =
          m.at("survival_covariates").get<std::vector<std::string>>();
    if (m.contains("membership_covariates"))
      config.spec.membership_covariates =
          m.at("membership_covariates").get<std::vector<std::string>>();
    if (m.contains("quad_order")) config.spec.quad_order = m.at("quad_order").get<int>();
    config.spec.validate();

    if (root.contains("priors")) {
      const auto& p = root.at("priors");
      auto set = [&](const char* key, Prior& target) {
        if (p.contains(key)) target = detail::parse_prior(p.at(key), key);
      };
      set("beta", config.priors.beta);
      set("gamma", config.priors.gamma);
      set("weibull_log_scale", config.priors.weibull_log_scale);
      set("alpha", config.priors.alpha);
      set("membership", config.priors.psi);
      set("weibull_shape", config.priors.weibull_shape);
      set("sigma2", config.priors.sigma2);
      set("re_variance", config.priors.re_variance);
    }
    config.priors.validate();

    if (root.contains("inits")) {
      for (const auto& [chain_key, values] : root.at("inits").items()) {
        int chain = std::atoi(chain_key.c_str());
        if (chain < 1) throw ConfigError("inits: chain keys are 1-based integers");
        for (const auto& [name, value] : values.items())
          config.inits[chain][name] = value.get<double>();
      }
    }
    return config;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
}

inline std::string read_text_file(const std::string& path) {
  auto in = detail::open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline ModelConfig load_model_config(const std::string& path) {
  return parse_model_config(read_text_file(path));
}

// Truth files ---------------------------------------------------------------------

inline nlohmann::json parameters_to_json(const Parameters& params) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& c : params.classes) {
    classes.push_back({{"beta", c.beta},
                       {"sigma2", c.sigma2},
                       {"weibull_shape", c.weibull_shape},
                       {"weibull_log_scale", c.weibull_log_scale},
                       {"gamma", c.gamma},
                       {"alpha", c.alpha},
                       {"re_variances", c.re_variances}});
  }
  return {{"classes", classes}, {"psi0", params.psi0}, {"psi", params.psi}};
}

inline Parameters parameters_from_json(const nlohmann::json& j) {
  Parameters params;
  for (const auto& c : j.at("classes")) {
    ClassParameters cp;
    cp.beta = c.at("beta").get<std::vector<double>>();
    cp.sigma2 = c.at("sigma2").get<double>();
    cp.weibull_shape = c.at("weibull_shape").get<double>();
    cp.weibull_log_scale = c.at("weibull_log_scale").get<double>();
    cp.gamma = c.at("gamma").get<std::vector<double>>();
    cp.alpha = c.at("alpha").get<double>();
    cp.re_variances = c.at("re_variances").get<std::vector<double>>();
    params.classes.push_back(std::move(cp));
  }
  params.psi0 = j.at("psi0").get<std::vector<double>>();
  params.psi = j.at("psi").get<std::vector<std::vector<double>>>();
  return params;
}

struct TruthInfo {
  std::string scenario;
  std::uint64_t seed = 0;
  Parameters params;
  std::vector<int> labels;                       // 1-based
  std::vector<std::vector<double>> random_effects;  // per subject, generating class
};

inline void write_truth_json(const std::string& path, const ScenarioConfig& config,
                             const SimulatedDataset& sim) {
  nlohmann::json j;
  j["scenario"] = config.name;
  j["seed"] = config.seed;
  j["n_subjects"] = config.n_subjects;
  j["parameters"] = parameters_to_json(config.truth);
  j["labels"] = sim.true_labels;
  nlohmann::json re = nlohmann::json::array();
  const int R = sim.true_effects.n_random;
  for (int i = 0; i < sim.true_effects.n; ++i) {
    const double* row = sim.true_effects.row(i, sim.true_labels[i] - 1);
    re.push_back(std::vector<double>(row, row + R));
  }
  j["random_effects"] = re;
  auto out = detail::open_out(path);
  out << j.dump(2) << '\n';
}

inline TruthInfo read_truth_json(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
    TruthInfo info;
    info.scenario = j.at("scenario").get<std::string>();
    info.seed = j.at("seed").get<std::uint64_t>();
    info.params = parameters_from_json(j.at("parameters"));
    info.labels = j.at("labels").get<std::vector<int>>();
    if (j.contains("random_effects"))
      info.random_effects = j.at("random_effects").get<std::vector<std::vector<double>>>();
    return info;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": invalid truth file: " + e.what());
  }
}

// Generic numeric tables ------------------------------------------------------------

struct NumericTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

inline NumericTable read_numeric_csv(const std::string& path) {
  auto in = detail::open_in(path);
  NumericTable table;
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path + ": empty file");
  table.header = detail::split_csv_line(line);
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto cells = detail::split_csv_line(line);
    std::string where = path + ":" + std::to_string(lineno);
    if (cells.size() != table.header.size())
      throw ConfigError(where + ": expected " + std::to_string(table.header.size()) + " columns");
    std::vector<double> row(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c)
      row[c] = detail::parse_double(cells[c], where);
    table.rows.push_back(std::move(row));
  }
  return table;
}

inline void write_numeric_csv(const std::string& path, const std::vector<std::string>& header,
                              const std::vector<std::vector<double>>& rows) {
  auto out = detail::open_out(path);
  for (std::size_t c = 0; c < header.size(); ++c)
    out << (c ? "," : "") << header[c];
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c)
      out << (c ? "," : "") << format_double(row[c]);
    out << '\n';
  }
}

// Fit artifacts ---------------------------------------------------------------------

// Named model parameters of every kept draw, constrained scale (latent
// random effects are not persisted).
inline void write_draws_csv(const std::string& path, const ChainDraws& chain,
                            const std::vector<std::string>& names) {
  auto out = detail::open_out(path);
  for (std::size_t c = 0; c < names.size(); ++c) out << (c ? "," : "") << names[c];
  out << '\n';
  for (int s = 0; s < chain.n_kept; ++s) {
    const double* row = chain.cdraw(s);
    for (std::size_t c = 0; c < names.size(); ++c)
      out << (c ? "," : "") << format_double(row[c]);
    out << '\n';
  }
}

inline void write_stats_csv(const std::string& path, const ChainDraws& chain) {
  auto out = detail::open_out(path);
  out << "draw,lp,tree_depth,divergent\n";
  for (int s = 0; s < chain.n_kept; ++s)
    out << (s + 1) << ',' << format_double(chain.lp[s]) << ',' << chain.tree_depth[s] << ','
        << static_cast<int>(chain.divergent[s]) << '\n';
}

inline void write_class_draws_csv(const std::string& path, const ClassDraws& cd,
                                  const std::vector<std::string>& ids) {
  auto out = detail::open_out(path);
  for (std::size_t c = 0; c < ids.size(); ++c) out << (c ? "," : "") << ids[c];
  out << '\n';
  for (int s = 0; s < cd.n_draws; ++s) {
    for (int i = 0; i < cd.n_subjects; ++i) out << (i ? "," : "") << cd.at(s, i);
    out << '\n';
  }
}

inline ClassDraws read_class_draws_csv(const std::string& path) {
  NumericTable table = read_numeric_csv(path);
  ClassDraws cd;
  cd.n_subjects = static_cast<int>(table.header.size());
  cd.n_draws = static_cast<int>(table.rows.size());
  if (cd.n_draws == 0) throw ConfigError(path + ": no label draws");
  cd.labels.reserve(static_cast<std::size_t>(cd.n_draws) * cd.n_subjects);
  int maxg = 1;
  for (const auto& row : table.rows)
    for (double v : row) {
      int g = static_cast<int>(v);
      if (g < 1 || g != v) throw ConfigError(path + ": labels must be positive integers");
      maxg = std::max(maxg, g);
      cd.labels.push_back(g);
    }
  cd.n_classes = maxg;
  return cd;
}

inline void write_class_probs_csv(const std::string& path, const std::vector<std::string>& ids,
                                  const std::vector<double>& probs,
                                  const std::vector<int>& map_labels, int n_classes) {
  auto out = detail::open_out(path);
  out << "id";
  for (int g = 1; g <= n_classes; ++g) out << ",class_" << g;
  out << ",map_class\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out << ids[i];
    for (int g = 0; g < n_classes; ++g)
      out << ',' << format_double(probs[i * n_classes + g]);
    out << ',' << map_labels[i] << '\n';
  }
}

inline void write_pointwise_csv(const std::string& path, const PointwiseLogLik& pll,
                                const std::vector<std::string>& ids) {
  auto out = detail::open_out(path);
  for (std::size_t c = 0; c < ids.size(); ++c) out << (c ? "," : "") << ids[c];
  out << '\n';
  for (int s = 0; s < pll.n_draws; ++s) {
    for (int i = 0; i < pll.n_subjects; ++i) out << (i ? "," : "") << format_double(pll.at(s, i));
    out << '\n';
  }
}

inline PointwiseLogLik read_pointwise_csv(const std::string& path) {
  NumericTable table = read_numeric_csv(path);
  PointwiseLogLik pll;
  pll.n_subjects = static_cast<int>(table.header.size());
  pll.n_draws = static_cast<int>(table.rows.size());
  if (pll.n_draws == 0) throw ConfigError(path + ": no draws");
  pll.ll.reserve(static_cast<std::size_t>(pll.n_draws) * pll.n_subjects);
  for (const auto& row : table.rows) pll.ll.insert(pll.ll.end(), row.begin(), row.end());
  return pll;
}

}  // namespace jlcm
