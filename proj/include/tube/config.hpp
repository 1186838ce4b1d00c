#pragma once

// JSON run configuration: schema-versioned, strict about unknown keys so a
// misspelled option fails loudly instead of silently defaulting.

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "tube/experiments.hpp"
#include "tube/serialize.hpp"

namespace tube {

inline constexpr int kConfigSchemaVersion = 1;

struct SweepSection {
  std::vector<double> betas{1.0, 1.5, 2.0, 3.0, 5.0};
  std::vector<int> bank_sizes;
  int replicates = 100;
};

struct AblationSection {
  std::vector<int> m_grid{1, 2, 4, 8};
  int k = 0;  // 0 resolves to bank/2
  int replicates = 1000;
  int finetune_size = 4096;
};

struct PropcheckSection {
  Sequence x;
  double psi = 0.0;
  std::vector<int> k_grid{1, 2, 4, 8};
  int replicates = 100000;
  int studies = 1;
};

struct CliConfig {
  ExperimentConfig exp;
  std::optional<SweepSection> sweep;
  std::optional<AblationSection> ablation;
  std::optional<PropcheckSection> propcheck;
  json raw;  // echoed into the manifest
};

namespace detail {

inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError("config: '" + where + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.contains(it.key()))
      throw ConfigError("config: unknown key '" + it.key() + "' in " + where);
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

}  // namespace detail

inline CliConfig load_config_json(const json& j) {
  detail::check_keys(j, {"schema_version", "space", "ground_truth", "data", "model", "regimes",
                         "bank_size", "estimators", "reseeds", "master_seed", "jobs", "sweep",
                         "ablation", "propcheck"},
                     "top level");
  if (!j.contains("schema_version")) throw ConfigError("config: missing schema_version");
  if (j.at("schema_version").get<int>() != kConfigSchemaVersion)
    throw ConfigError("config: unsupported schema_version");
  if (!j.contains("space")) throw ConfigError("config: missing space");
  if (!j.contains("master_seed")) throw ConfigError("config: missing master_seed");

  CliConfig cfg;
  cfg.raw = j;
  ExperimentConfig& e = cfg.exp;

  {
    const json& s = j.at("space");
    detail::check_keys(s, {"vocab", "length", "block"}, "space");
    e.space = space_from_json(s);
  }
  e.master_seed = j.at("master_seed").get<std::uint64_t>();
  e.jobs = detail::get_or<int>(j, "jobs", 1);
  if (e.jobs < 1) throw ConfigError("config: jobs must be >= 1");

  if (j.contains("ground_truth")) {
    const json& g = j.at("ground_truth");
    detail::check_keys(g, {"kind", "seed"}, "ground_truth");
    const std::string kind = g.at("kind").get<std::string>();
    if (kind == "random-joint") e.ground_truth.kind = GroundTruthSpec::Kind::random_joint;
    else if (kind == "block-markov") e.ground_truth.kind = GroundTruthSpec::Kind::block_markov;
    else throw ConfigError("config: ground_truth.kind must be random-joint or block-markov");
    e.ground_truth.seed = detail::get_or<std::uint64_t>(g, "seed", 1);
  }

  if (j.contains("data")) {
    const json& d = j.at("data");
    detail::check_keys(d, {"train_size", "test_size"}, "data");
    e.train_size = detail::get_or<int>(d, "train_size", e.train_size);
    e.test_size = detail::get_or<int>(d, "test_size", e.test_size);
    if (e.train_size < 0 || e.test_size < 0) throw ConfigError("config: data sizes must be >= 0");
  }

  if (j.contains("model")) {
    const json& m = j.at("model");
    detail::check_keys(m, {"source", "epsilon", "alpha", "masks_per_example"}, "model");
    const std::string source = detail::get_or<std::string>(m, "source", "fit");
    if (source == "fit") e.model.source = ModelSpec::Source::fit;
    else if (source == "bayes") e.model.source = ModelSpec::Source::bayes;
    else if (source == "perturbed") e.model.source = ModelSpec::Source::perturbed;
    else if (source == "toy-a") e.model.source = ModelSpec::Source::toy_a;
    else throw ConfigError("config: model.source must be fit, bayes, perturbed, or toy-a");
    e.model.epsilon = detail::get_or<double>(m, "epsilon", 0.0);
    e.model.alpha = detail::get_or<double>(m, "alpha", 1.0);
    e.model.masks_per_example = detail::get_or<int>(m, "masks_per_example", 8);
    if (e.model.epsilon < 0.0 || e.model.epsilon > 1.0) throw ConfigError("config: model.epsilon must be in [0, 1]");
    if (e.model.alpha < 0.0) throw ConfigError("config: model.alpha must be >= 0");
    if (e.model.masks_per_example < 1) throw ConfigError("config: model.masks_per_example must be >= 1");
  }

  if (j.contains("regimes")) {
    const json& r = j.at("regimes");
    detail::check_keys(r, {"nfe", "ao_arm"}, "regimes");
    if (r.contains("nfe")) e.nfe = r.at("nfe").get<std::vector<int>>();
    e.ao_arm = detail::get_or<bool>(r, "ao_arm", true);
  }

  e.bank_size = detail::get_or<int>(j, "bank_size", 0);
  if (j.contains("estimators")) {
    const json& s = j.at("estimators");
    detail::check_keys(s, {"beta", "tvo_grid", "isvgb_pairs", "isvgb_s"}, "estimators");
    e.est.beta = detail::get_or<double>(s, "beta", 2.0);
    e.est.tvo_grid = detail::get_or<int>(s, "tvo_grid", 200);
    e.est.isvgb_pairs = detail::get_or<int>(s, "isvgb_pairs", 2);
    e.est.isvgb_s = detail::get_or<int>(s, "isvgb_s", 0);
    if (e.est.beta < 1.0) throw ConfigError("config: estimators.beta must be >= 1");
    if (e.est.tvo_grid < 1) throw ConfigError("config: estimators.tvo_grid must be >= 1");
    if (e.est.isvgb_pairs < 2) throw ConfigError("config: estimators.isvgb_pairs must be >= 2");
  }
  e.reseeds = detail::get_or<int>(j, "reseeds", 10);

  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    detail::check_keys(s, {"betas", "bank_sizes", "replicates"}, "sweep");
    SweepSection sec;
    if (s.contains("betas")) sec.betas = s.at("betas").get<std::vector<double>>();
    if (s.contains("bank_sizes")) sec.bank_sizes = s.at("bank_sizes").get<std::vector<int>>();
    sec.replicates = detail::get_or<int>(s, "replicates", 100);
    cfg.sweep = std::move(sec);
  }

  if (j.contains("ablation")) {
    const json& a = j.at("ablation");
    detail::check_keys(a, {"m_grid", "k", "replicates", "finetune_size"}, "ablation");
    AblationSection sec;
    if (a.contains("m_grid")) sec.m_grid = a.at("m_grid").get<std::vector<int>>();
    sec.k = detail::get_or<int>(a, "k", 0);
    sec.replicates = detail::get_or<int>(a, "replicates", 1000);
    sec.finetune_size = detail::get_or<int>(a, "finetune_size", 4096);
    cfg.ablation = std::move(sec);
  }

  if (j.contains("propcheck")) {
    const json& p = j.at("propcheck");
    detail::check_keys(p, {"x", "psi", "k_grid", "replicates", "studies"}, "propcheck");
    PropcheckSection sec;
    sec.x = p.at("x").get<Sequence>();
    sec.psi = p.at("psi").get<double>();
    if (p.contains("k_grid")) sec.k_grid = p.at("k_grid").get<std::vector<int>>();
    sec.replicates = detail::get_or<int>(p, "replicates", 100000);
    sec.studies = detail::get_or<int>(p, "studies", 1);
    cfg.propcheck = std::move(sec);
  }

  return cfg;
}

inline CliConfig load_config_file(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& err) {
    throw ConfigError("config: cannot parse '" + path + "': " + err.what());
  }
  return load_config_json(j);
}

// FNV-1a over the canonical dump (nlohmann sorts object keys), so the hash is
// stable under key reordering in the source file.
inline std::uint64_t config_hash(const json& j) {
  const std::string s = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace tube
