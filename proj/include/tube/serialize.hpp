#pragma once

// File formats: versioned JSON for models and ground-truth joints, one
// sequence per line for corpora, UTF-8 CSV with '.' decimals and 12
// significant digits for results.

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tube/experiments.hpp"
#include "tube/models.hpp"

namespace tube {

inline constexpr int kFileSchemaVersion = 1;

using json = nlohmann::json;

// --- model ----------------------------------------------------------------------

inline const char* mode_name(CondModel::Mode m) {
  switch (m) {
    case CondModel::Mode::bayes_exact: return "bayes-exact";
    case CondModel::Mode::fitted: return "fitted";
    case CondModel::Mode::perturbed: return "perturbed";
  }
  return "?";
}

inline CondModel::Mode mode_from_name(const std::string& s) {
  if (s == "bayes-exact") return CondModel::Mode::bayes_exact;
  if (s == "fitted") return CondModel::Mode::fitted;
  if (s == "perturbed") return CondModel::Mode::perturbed;
  throw ConfigError("model file: unknown mode '" + s + "'");
}

inline json space_to_json(const SeqSpace& s) {
  return json{{"vocab", s.vocab}, {"length", s.length}, {"block", s.block}};
}

inline SeqSpace space_from_json(const json& j) {
  return SeqSpace(j.at("vocab").get<int>(), j.at("length").get<int>(), j.at("block").get<int>());
}

inline json model_to_json(const CondModel& m) {
  json tables = json::array();
  for (int d = 0; d < m.space().length; ++d) {
    for (std::int64_t prev = 0; prev < m.prev_count(d); ++prev) {
      for (std::int64_t ctx = 0; ctx < m.ctx_count(); ++ctx) {
        auto vec = m.cond_vector(d, prev, ctx);
        tables.push_back(json{{"position", d},
                              {"prev", prev},
                              {"context", ctx},
                              {"probs", std::vector<double>(vec.begin(), vec.end())}});
      }
    }
  }
  return json{{"schema_version", kFileSchemaVersion},
              {"type", "cond-model"},
              {"space", space_to_json(m.space())},
              {"mode", mode_name(m.mode())},
              {"alpha", m.alpha()},
              {"tables", std::move(tables)}};
}

inline CondModel model_from_json(const json& j) {
  if (j.at("schema_version").get<int>() != kFileSchemaVersion) throw ConfigError("model file: unsupported schema_version");
  if (j.at("type").get<std::string>() != "cond-model") throw ConfigError("model file: wrong type tag");
  const SeqSpace space = space_from_json(j.at("space"));
  CondModel m(space, mode_from_name(j.at("mode").get<std::string>()), j.at("alpha").get<double>());
  std::size_t expected = 0;
  for (int d = 0; d < space.length; ++d) expected += static_cast<std::size_t>(m.prev_count(d) * m.ctx_count());
  const json& tables = j.at("tables");
  if (tables.size() != expected) throw ConfigError("model file: table is not complete");
  for (const json& row : tables) {
    const int d = row.at("position").get<int>();
    const std::int64_t prev = row.at("prev").get<std::int64_t>();
    const std::int64_t ctx = row.at("context").get<std::int64_t>();
    if (d < 0 || d >= space.length || prev < 0 || prev >= m.prev_count(d) || ctx < 0 || ctx >= m.ctx_count())
      throw ConfigError("model file: table key out of range");
    const auto probs = row.at("probs").get<std::vector<double>>();
    if (static_cast<int>(probs.size()) != space.vocab) throw ConfigError("model file: wrong vector width");
    auto vec = m.mutable_cond_vector(d, prev, ctx);
    for (int v = 0; v < space.vocab; ++v) vec[v] = probs[static_cast<std::size_t>(v)];
  }
  m.validate();
  return m;
}

// --- ground truth ----------------------------------------------------------------

inline json joint_to_json(const GroundTruthJoint& joint) {
  json j{{"schema_version", kFileSchemaVersion},
         {"type", "ground-truth"},
         {"space", space_to_json(joint.space)}};
  if (joint.kind == GroundTruthJoint::Kind::full) {
    j["kind"] = "full";
    j["probs"] = joint.full;
  } else {
    j["kind"] = "block-markov";
    j["initial"] = joint.initial;
    j["transition"] = joint.transition;
  }
  return j;
}

inline GroundTruthJoint joint_from_json(const json& j) {
  if (j.at("schema_version").get<int>() != kFileSchemaVersion) throw ConfigError("joint file: unsupported schema_version");
  if (j.at("type").get<std::string>() != "ground-truth") throw ConfigError("joint file: wrong type tag");
  GroundTruthJoint joint;
  joint.space = space_from_json(j.at("space"));
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "full") {
    joint.kind = GroundTruthJoint::Kind::full;
    joint.full = j.at("probs").get<std::vector<double>>();
    if (static_cast<std::int64_t>(joint.full.size()) != joint.num_states())
      throw ConfigError("joint file: wrong table size");
  } else if (kind == "block-markov") {
    joint.kind = GroundTruthJoint::Kind::block_markov;
    joint.initial = j.at("initial").get<std::vector<double>>();
    joint.transition = j.at("transition").get<std::vector<double>>();
    const std::int64_t bs = joint.block_states();
    if (static_cast<std::int64_t>(joint.initial.size()) != bs ||
        static_cast<std::int64_t>(joint.transition.size()) != bs * bs)
      throw ConfigError("joint file: wrong table size");
  } else {
    throw ConfigError("joint file: unknown kind '" + kind + "'");
  }
  joint.validate();
  return joint;
}

// --- corpus ------------------------------------------------------------------------

inline void write_corpus(std::ostream& out, const SeqSpace& space, const std::vector<Sequence>& corpus,
                         std::uint64_t seed) {
  out << "# vocab=" << space.vocab << " length=" << space.length << " block=" << space.block
      << " count=" << corpus.size() << " seed=" << seed << "\n";
  for (const Sequence& x : corpus) {
    for (int d = 0; d < space.length; ++d) out << (d ? " " : "") << x[d];
    out << "\n";
  }
}

struct CorpusFile {
  SeqSpace space;
  std::uint64_t seed = 0;
  std::vector<Sequence> sequences;
};

inline CorpusFile read_corpus(std::istream& in) {
  std::string header;
  if (!std::getline(in, header) || header.rfind("# ", 0) != 0) throw ConfigError("corpus: missing header line");
  int vocab = 0, length = 0, block = 0;
  std::uint64_t count = 0, seed = 0;
  {
    std::istringstream hs(header.substr(2));
    std::string field;
    while (hs >> field) {
      const auto eq = field.find('=');
      if (eq == std::string::npos) throw ConfigError("corpus: malformed header field '" + field + "'");
      const std::string key = field.substr(0, eq), val = field.substr(eq + 1);
      if (key == "vocab") vocab = std::stoi(val);
      else if (key == "length") length = std::stoi(val);
      else if (key == "block") block = std::stoi(val);
      else if (key == "count") count = std::stoull(val);
      else if (key == "seed") seed = std::stoull(val);
      else throw ConfigError("corpus: unknown header field '" + key + "'");
    }
  }
  CorpusFile file{SeqSpace(vocab, length, block), seed, {}};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    Sequence x;
    int tok;
    while (ls >> tok) x.push_back(tok);
    require_valid_sequence(file.space, x);
    file.sequences.push_back(std::move(x));
  }
  if (file.sequences.size() != count) throw ConfigError("corpus: count does not match body");
  return file;
}

// --- CSV ----------------------------------------------------------------------------

inline std::string csv_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

inline void write_table_csv(std::ostream& out, const EstimateTable& table) {
  out << "l_prime,regime,estimator,mean_ppl,std_ppl,mean_nats,violation,gap\n";
  for (const TableRow& r : table.rows)
    out << r.l_prime << ',' << r.regime << ',' << r.estimator << ',' << csv_num(r.mean_ppl) << ','
        << csv_num(r.std_ppl) << ',' << csv_num(r.mean_nats) << ',' << (r.violation ? 1 : 0) << ','
        << csv_num(r.gap) << "\n";
}

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepCell>& cells) {
  out << "beta,bank_size,mean,mean_nats,violation\n";
  for (const SweepCell& c : cells)
    out << csv_num(c.beta) << ',' << c.bank_size << ',' << csv_num(c.mean_ppl) << ','
        << csv_num(c.mean_nats) << ',' << (c.violation ? 1 : 0) << "\n";
}

inline void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows) {
  out << "surrogate,m,mean_ppl,std_ppl,mean_nats,mean_gap_nats\n";
  for (const AblationRow& r : rows)
    out << r.surrogate << ',' << r.m << ',' << csv_num(r.mean_ppl) << ',' << csv_num(r.std_ppl) << ','
        << csv_num(r.mean_nats) << ',' << csv_num(r.mean_gap_nats) << "\n";
}

inline void write_propcheck_csv(std::ostream& out, const std::vector<ReplicateStats>& stats) {
  out << "estimator,study,k,replicates,mean,variance,std_error,population,z_score,theory_variance,"
         "variance_rel_error\n";
  for (const ReplicateStats& s : stats)
    out << s.estimator << ',' << s.study << ',' << s.k << ',' << s.replicates << ',' << csv_num(s.mean)
        << ',' << csv_num(s.variance) << ',' << csv_num(s.std_error) << ',' << csv_num(s.population)
        << ',' << csv_num(s.z_score) << ',' << csv_num(s.theory_variance) << ','
        << csv_num(s.variance_rel_error) << "\n";
}

// BoundEstimate flat record consumed by the experiment drivers.
inline json bound_to_json(const BoundEstimate& b, std::uint64_t seed = 0) {
  const char* dir = b.direction == Direction::lower ? "lower"
                    : b.direction == Direction::upper ? "upper"
                                                      : "exact";
  json params;
  if (b.params.k) params["k"] = b.params.k;
  if (b.params.beta != 0.0) params["beta"] = b.params.beta;
  if (b.params.grid) params["grid"] = b.params.grid;
  if (b.params.s) params["s"] = b.params.s;
  if (b.params.pairs) params["pairs"] = b.params.pairs;
  if (b.params.m) params["m"] = b.params.m;
  return json{{"estimator", b.estimator}, {"params", params},          {"value_nats", b.value},
              {"direction", dir},         {"bound_preserving", b.bound_preserving},
              {"seed", seed}};
}

// --- small file helpers ----------------------------------------------------------------

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw ConfigError("failed writing '" + path + "'");
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace tube
