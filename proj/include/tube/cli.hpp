#pragma once

// Command implementations behind the CLI binary. Each command locks the
// output directory, writes its artifacts plus a run manifest, and is
// byte-identical on the data artifacts for a fixed config and seed.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tube/config.hpp"
#include "tube/serialize.hpp"
#include "tube/version.hpp"

namespace tube {

namespace fs = std::filesystem;

class DirLock {
 public:
  explicit DirLock(const fs::path& dir) : path_(dir / ".tube.lock") {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (fs::exists(path_))
      throw ConfigError("output directory is locked by another run: " + path_.string());
    std::ofstream lock(path_);
    if (!lock) throw ConfigError("cannot create lock file " + path_.string());
  }
  ~DirLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  fs::path path_;
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// One manifest per run: config hash, effective seed, versions, outputs,
// wall clock. The data artifacts are deterministic; the manifest's
// timestamps are run metadata and are not.
inline void write_manifest(const fs::path& out_dir, const std::string& command, const CliConfig& cfg,
                           const std::vector<std::string>& outputs, const std::string& started,
                           double wall_seconds) {
  char hash_hex[32];
  std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                static_cast<unsigned long long>(config_hash(cfg.raw)));
  json manifest{{"command", command},
                {"schema_version", kConfigSchemaVersion},
                {"config_hash", hash_hex},
                {"master_seed", cfg.exp.master_seed},
                {"versions", json{{"tube", kVersion}}},
                {"outputs", outputs},
                {"config", cfg.raw},
                {"started_utc", started},
                {"finished_utc", utc_timestamp()},
                {"wall_clock_seconds", wall_seconds}};
  write_text_file((out_dir / "manifest.json").string(), manifest.dump(2) + "\n");
}

namespace detail {

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  std::string started = utc_timestamp();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

inline std::vector<Sequence> load_corpus_for(const SeqSpace& space, const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("missing corpus file " + path.string());
  CorpusFile file = read_corpus(in);
  if (!(file.space == space)) throw ConfigError("corpus space does not match config: " + path.string());
  return std::move(file.sequences);
}

inline CondModel load_model_for(const SeqSpace& space, const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("missing model file " + path.string());
  json j;
  try {
    j = json::parse(read_text_file(path.string()));
  } catch (const json::exception& err) {
    throw ConfigError("cannot parse model file: " + std::string(err.what()));
  }
  CondModel m = model_from_json(j);
  if (!(m.space() == space)) throw ConfigError("model space does not match config");
  return m;
}

// Instance whose model/corpora come from the files a previous gen-data / fit
// run wrote into the same directory.
inline Instance load_instance(const CliConfig& cfg, const fs::path& dir) {
  Instance inst{.joint = GroundTruthJoint{},
                .train = load_corpus_for(cfg.exp.space, dir / "corpus.txt"),
                .test = load_corpus_for(cfg.exp.space, dir / "test.txt"),
                .model = load_model_for(cfg.exp.space, dir / "model.json"),
                .arm = CondModel()};
  if (inst.train.empty()) throw ConfigError("corpus.txt is empty; eval needs a training corpus");
  inst.arm = fit_arm(cfg.exp.space, inst.train, cfg.exp.model.alpha);
  return inst;
}

}  // namespace detail

// Writes joint.json, corpus.txt (training corpus) and test.txt (held-out test
// set), all deterministic for the configured seeds.
inline void cmd_gen_data(const CliConfig& cfg, const fs::path& out_dir) {
  DirLock lock(out_dir);
  detail::Timer timer;
  const GroundTruthJoint joint = build_ground_truth(cfg.exp.space, cfg.exp.ground_truth);
  Rng train_rng = derive_stream(cfg.exp.master_seed, {0x44, 0});
  Rng test_rng = derive_stream(cfg.exp.master_seed, {0x44, 1});
  std::vector<Sequence> train, test;
  for (int i = 0; i < cfg.exp.train_size; ++i) train.push_back(joint.sample(train_rng));
  for (int i = 0; i < cfg.exp.test_size; ++i) test.push_back(joint.sample(test_rng));

  write_text_file((out_dir / "joint.json").string(), joint_to_json(joint).dump(2) + "\n");
  std::ostringstream corpus, testset;
  write_corpus(corpus, cfg.exp.space, train, cfg.exp.master_seed);
  write_corpus(testset, cfg.exp.space, test, cfg.exp.master_seed);
  write_text_file((out_dir / "corpus.txt").string(), corpus.str());
  write_text_file((out_dir / "test.txt").string(), testset.str());
  write_manifest(out_dir, "gen-data", cfg, {"joint.json", "corpus.txt", "test.txt"}, timer.started,
                 timer.seconds());
}

// Fits (or derives) the evaluated model and writes model.json. bayes and
// perturbed modes bypass fitting and derive from the stored joint.
inline void cmd_fit(const CliConfig& cfg, const fs::path& out_dir) {
  DirLock lock(out_dir);
  detail::Timer timer;
  CondModel model;
  if (cfg.exp.model.source == ModelSpec::Source::fit) {
    const auto train = detail::load_corpus_for(cfg.exp.space, out_dir / "corpus.txt");
    Rng rng = derive_stream(cfg.exp.master_seed, {0x46});
    model = fit_tabular(cfg.exp.space, train, cfg.exp.model.alpha, cfg.exp.model.masks_per_example, rng);
  } else if (cfg.exp.model.source == ModelSpec::Source::toy_a) {
    if (!(cfg.exp.space == SeqSpace(2, 2, 2)))
      throw ConfigError("model source toy-a requires space vocab=2 length=2 block=2");
    model = make_toy_a();
  } else {
    std::ifstream in(out_dir / "joint.json");
    if (!in) throw ConfigError("missing joint.json; run gen-data first");
    const GroundTruthJoint joint = joint_from_json(json::parse(read_text_file((out_dir / "joint.json").string())));
    if (!(joint.space == cfg.exp.space)) throw ConfigError("joint space does not match config");
    model = bayes_model_from_joint(joint);
    if (cfg.exp.model.source == ModelSpec::Source::perturbed) {
      Rng rng = derive_stream(cfg.exp.master_seed, {0x50});
      model = perturb_model(model, cfg.exp.model.epsilon, rng);
    }
  }
  write_text_file((out_dir / "model.json").string(), model_to_json(model).dump() + "\n");
  write_manifest(out_dir, "fit", cfg, {"model.json"}, timer.started, timer.seconds());
}

// Runs the estimator comparison table against the stored model and corpora.
inline void cmd_eval(const CliConfig& cfg, const fs::path& out_dir) {
  DirLock lock(out_dir);
  detail::Timer timer;
  const Instance inst = detail::load_instance(cfg, out_dir);
  const EstimateTable table = run_comparison_table(cfg.exp, inst);
  std::ostringstream csv;
  write_table_csv(csv, table);
  write_text_file((out_dir / "eval.csv").string(), csv.str());
  write_manifest(out_dir, "eval", cfg, {"eval.csv"}, timer.started, timer.seconds());
}

inline void cmd_sweep(const CliConfig& cfg, const fs::path& out_dir) {
  if (!cfg.sweep) throw ConfigError("config: sweep section is required for the sweep command");
  DirLock lock(out_dir);
  detail::Timer timer;
  const Instance inst = detail::load_instance(cfg, out_dir);
  SweepSection sec = *cfg.sweep;
  if (sec.bank_sizes.empty()) {
    // default grid: powers of two up to the enumeration total, plus the total
    const int total = static_cast<int>(enumerate_single_orders(cfg.exp.space.block).size());
    for (int b = 2; b < total; b *= 2) sec.bank_sizes.push_back(b);
    sec.bank_sizes.push_back(total);
  }
  const auto cells = cubo_sweep(cfg.exp, inst, sec.betas, sec.bank_sizes, sec.replicates);
  std::ostringstream csv;
  write_sweep_csv(csv, cells);
  write_text_file((out_dir / "sweep.csv").string(), csv.str());
  write_manifest(out_dir, "sweep", cfg, {"sweep.csv"}, timer.started, timer.seconds());
}

inline void cmd_ablate(const CliConfig& cfg, const fs::path& out_dir) {
  if (!cfg.ablation) throw ConfigError("config: ablation section is required for the ablate command");
  DirLock lock(out_dir);
  detail::Timer timer;
  const Instance inst = detail::load_instance(cfg, out_dir);
  const AblationSection& sec = *cfg.ablation;
  const int k = sec.k > 0 ? sec.k : std::max(1, resolve_bank_size(cfg.exp) / 2);
  const auto rows = surrogate_ablation(cfg.exp, inst, sec.m_grid, k, sec.replicates, sec.finetune_size);
  std::ostringstream csv;
  write_ablation_csv(csv, rows);
  write_text_file((out_dir / "ablate.csv").string(), csv.str());
  write_manifest(out_dir, "ablate", cfg, {"ablate.csv"}, timer.started, timer.seconds());
}

// Unbiasedness / variance replication study; builds its model in memory.
inline void cmd_propcheck(const CliConfig& cfg, const fs::path& out_dir) {
  if (!cfg.propcheck) throw ConfigError("config: propcheck section is required for the propcheck command");
  DirLock lock(out_dir);
  detail::Timer timer;
  CondModel model;
  if (cfg.exp.model.source == ModelSpec::Source::fit) {
    const GroundTruthJoint joint = build_ground_truth(cfg.exp.space, cfg.exp.ground_truth);
    Rng train_rng = derive_stream(cfg.exp.master_seed, {0x44, 0});
    std::vector<Sequence> train;
    for (int i = 0; i < cfg.exp.train_size; ++i) train.push_back(joint.sample(train_rng));
    model = build_model(cfg.exp, joint, train);
  } else if (cfg.exp.model.source == ModelSpec::Source::toy_a) {
    model = build_model(cfg.exp, GroundTruthJoint{}, {});
  } else {
    const GroundTruthJoint joint = build_ground_truth(cfg.exp.space, cfg.exp.ground_truth);
    model = build_model(cfg.exp, joint, {});
  }
  PropcheckSettings settings;
  settings.x = cfg.propcheck->x;
  settings.psi = cfg.propcheck->psi;
  settings.k_grid = cfg.propcheck->k_grid;
  settings.replicates = cfg.propcheck->replicates;
  settings.studies = cfg.propcheck->studies;
  const auto stats = unbiasedness_variance_study(model, settings, cfg.exp.master_seed, cfg.exp.jobs);
  std::ostringstream csv;
  write_propcheck_csv(csv, stats);
  write_text_file((out_dir / "propcheck.csv").string(), csv.str());
  write_manifest(out_dir, "propcheck", cfg, {"propcheck.csv"}, timer.started, timer.seconds());
}

}  // namespace tube
