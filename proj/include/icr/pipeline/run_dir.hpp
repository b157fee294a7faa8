#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "icr/error.hpp"
#include "icr/lm/checkpoint.hpp"
#include "icr/pairs.hpp"
#include "icr/pipeline/config.hpp"
#include "icr/pipeline/io.hpp"
#include "icr/pipeline/stages.hpp"

namespace icr::pipeline {

namespace fs = std::filesystem;

inline const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names{"gen-world", "train-sft", "align-en", "iterate", "eval", "reward-acc"};
  return names;
}

// The stage each stage builds on directly.
inline std::string prerequisite(const std::string& stage) {
  if (stage == "train-sft") return "gen-world";
  if (stage == "align-en") return "train-sft";
  if (stage == "iterate" || stage == "reward-acc") return "align-en";
  if (stage == "eval") return "train-sft";
  return "";
}

inline bool depends_on(const std::string& stage, const std::string& upstream) {
  for (std::string s = prerequisite(stage); !s.empty(); s = prerequisite(s))
    if (s == upstream) return true;
  // eval also reads every checkpoint that align-en and iterate produced
  return stage == "eval" && (upstream == "align-en" || upstream == "iterate");
}

// What a later stage needs from `stage`; named in stage-order errors.
inline std::string key_artifact(const std::string& stage) {
  if (stage == "gen-world") return "world/sft_corpus.jsonl";
  if (stage == "train-sft") return "checkpoints/pi_I.ckpt";
  if (stage == "align-en") return "checkpoints/pi_0.ckpt";
  return "";
}

inline std::string checkpoint_name(int t) { return "checkpoints/pi_" + std::to_string(t) + ".ckpt"; }

// One pipeline over one directory. Every stage checks its prerequisites'
// stamps, writes its artifacts, then stamps the manifest.
class RunDir {
 public:
  RunDir(fs::path root, RunConfig cfg, bool force = false, std::ostream& log = std::cout)
      : root_(std::move(root)), cfg_(std::move(cfg)), force_(force), log_(log) {
    cfg_.validate();
    load_manifest();
  }

  const fs::path& root() const { return root_; }
  const RunConfig& config() const { return cfg_; }
  const nlohmann::ordered_json& manifest() const { return manifest_; }

  // Each returns false when the stage was already complete (a no-op).
  bool gen_world() {
    if (!begin("gen-world")) return false;
    const World w = build_world(cfg_);
    save_prompts(w.sft_prompts, path("world/sft_prompts.jsonl"));
    save_corpus(w.corpus, path("world/sft_corpus.jsonl"));
    save_prompts(w.align_prompts, path("world/align_prompts.jsonl"));
    save_prompts(w.eval_prompts, path("world/eval_prompts.jsonl"));
    finish("gen-world", {"world/sft_prompts.jsonl", "world/sft_corpus.jsonl", "world/align_prompts.jsonl",
                         "world/eval_prompts.jsonl"});
    return true;
  }

  bool train_sft() {
    if (!begin("train-sft")) return false;
    train::StepLog log;
    lm::Model m = train_initial(cfg_, load_corpus(path("world/sft_corpus.jsonl")), &log);
    lm::save_checkpoint(m, path("checkpoints/pi_I.ckpt"));
    save_step_log(log, path("metrics/sft.jsonl"));
    log_ << "train-sft: " << log.size() << " steps, loss " << log.front().loss << " -> " << log.back().loss << '\n';
    finish("train-sft", {"checkpoints/pi_I.ckpt", "metrics/sft.jsonl"});
    return true;
  }

  bool align_en() {
    if (!begin("align-en")) return false;
    const lm::Model initial = lm::load_checkpoint(path("checkpoints/pi_I.ckpt"));
    auto r = align_english(cfg_, cfg_.vocab(), load_prompts(path("world/align_prompts.jsonl")), initial);
    save_samples(r.scored, path("pools/align_en.samples.jsonl"));
    save_scored(r.scored, "oracle", cfg_.align.train.beta, {}, path("pools/align_en.scored.jsonl"));
    save_dataset(r.dataset, path("data/align_en.jsonl"));
    save_step_log(r.log, path("metrics/align_en.jsonl"));
    lm::save_checkpoint(r.policy, path("checkpoints/pi_0.ckpt"));
    log_ << "align-en: " << r.dataset.size() << " English pairs, " << r.log.size() << " steps\n";
    finish("align-en", {"pools/align_en.samples.jsonl", "pools/align_en.scored.jsonl", "data/align_en.jsonl",
                        "metrics/align_en.jsonl", "checkpoints/pi_0.ckpt"});
    return true;
  }

  bool iterate() {
    if (!begin("iterate")) return false;
    const lm::Model initial = lm::load_checkpoint(path("checkpoints/pi_I.ckpt"));
    const lm::Model start = lm::load_checkpoint(path("checkpoints/pi_0.ckpt"));
    std::vector<std::string> artifacts;
    LineWriter summary(path("metrics/iterate.jsonl"));
    const std::string variant = reward::to_string(cfg_.reward.variant);
    pipeline::iterate(cfg_, initial, start, [&](const train::RoundOutput& o) {
      const std::string t = std::to_string(o.round);
      const std::vector<std::string> files{"world/iterate_round_" + t + ".jsonl", "pools/round_" + t + ".samples.jsonl",
                                           "pools/round_" + t + ".scored.jsonl", "data/round_" + t + ".jsonl",
                                           "metrics/round_" + t + ".jsonl", checkpoint_name(o.round)};
      save_prompts(iterate_prompts(cfg_, o.round), path(files[0]));
      save_samples(*o.scored, path(files[1]));
      save_scored(*o.scored, variant, cfg_.reward.beta, o.metrics->alpha, path(files[2]));
      save_dataset(*o.dataset, path(files[3]));
      save_step_log(*o.log, path(files[4]));
      lm::save_checkpoint(*o.policy, path(files[5]));
      artifacts.insert(artifacts.end(), files.begin(), files.end());
      const auto& m = *o.metrics;
      Json j;
      j["round"] = m.round;
      j["pairs"] = m.pairs;
      j["skipped"] = m.skipped;
      Json counts;
      for (const auto& [lang, c] : m.counts) counts[babel::lang_name(lang)] = c;
      j["counts"] = counts;
      j["alpha"] = m.alpha;
      j["loss_first"] = m.loss_first;
      j["loss_last"] = m.loss_last;
      j["mean_margin"] = m.mean_margin;
      summary.write(j);
      log_ << "iterate: round " << m.round << ", " << m.pairs << " pairs, loss " << m.loss_first << " -> "
           << m.loss_last << '\n';
    });
    summary.close();
    artifacts.push_back("metrics/iterate.jsonl");
    finish("iterate", artifacts, {{"rounds", cfg_.iterations}});
    return true;
  }

  // pi^0 against pi_I, then every iterated policy against pi^0; whatever
  // checkpoints are stamped in the manifest.
  bool eval() {
    if (!begin("eval")) return false;
    World w{cfg_.vocab(), load_prompts(path("world/sft_prompts.jsonl")), {},
            load_prompts(path("world/align_prompts.jsonl")), load_prompts(path("world/eval_prompts.jsonl"))};
    const lm::Model initial = lm::load_checkpoint(path("checkpoints/pi_I.ckpt"));
    for (const std::string up : {"align-en", "iterate"})
      if (stamped(up) && manifest_["stages"][up]["stage_hash"].get<std::string>() != stage_hash(cfg_, up))
        fail(ErrorKind::config_mismatch, up + " in " + root_.string() +
                                             " was produced under a different config; re-run it with --force");
    int rounds = 0;
    if (stamped("iterate")) rounds = manifest_["stages"]["iterate"]["rounds"].get<int>();
    std::vector<std::string> artifacts;
    auto summary = load_summary();
    auto report = [&](const std::string& name, const lm::Model& cand, const lm::Model& base,
                      const std::string& base_name) {
      const auto r = evaluate(cfg_, w, cand, base, base_name, rounds);
      const std::string file = "reports/eval_" + name + ".csv";
      save_csv(winrate_rows(r.report, r.lengths), path(file));
      artifacts.push_back(file);
      Json j;
      j["baseline"] = base_name;
      j["decode"] = r.report.decode;
      for (const auto& [lang, row] : r.report.per_lang) j["win_rate"][babel::lang_name(lang)] = row.win_rate();
      j["avg_non_en_win_rate"] = r.report.mean_win_rate(true);
      summary["eval"][name] = j;
      log_ << "eval: " << name << " vs " << base_name << ", mean non-English win rate "
           << r.report.mean_win_rate(true) << '\n';
    };
    if (!stamped("align-en")) {
      report("pi_I", initial, initial, "pi_I");
    } else {
      const lm::Model pi0 = lm::load_checkpoint(path("checkpoints/pi_0.ckpt"));
      report("pi_0", pi0, initial, "pi_I");
      for (int t = 1; t <= rounds; ++t)
        report("pi_" + std::to_string(t), lm::load_checkpoint(path(checkpoint_name(t))), pi0, "pi_0");
    }
    save_summary(summary);
    artifacts.push_back("reports/summary.json");
    finish("eval", artifacts);
    return true;
  }

  bool reward_acc() {
    if (!begin("reward-acc")) return false;
    const lm::Model initial = lm::load_checkpoint(path("checkpoints/pi_I.ckpt"));
    const lm::Model pi0 = lm::load_checkpoint(path("checkpoints/pi_0.ckpt"));
    std::vector<std::string> artifacts;
    std::vector<CsvRow> rows;
    auto summary = load_summary();
    for (const auto& va : pipeline::reward_acc(cfg_, initial, pi0)) {
      const std::string v = reward::to_string(va.variant);
      const std::string pool = "pools/reward_acc_" + v + ".scored.jsonl", data = "data/reward_acc_" + v + ".jsonl";
      save_scored(va.scored, v, cfg_.reward.beta, va.alpha, path(pool));
      save_dataset(va.dataset, path(data));
      artifacts.push_back(pool);
      artifacts.push_back(data);
      for (auto& r : accuracy_rows(v + "_", va.report, eval::length_stats(va.dataset))) rows.push_back(r);
      Json j;
      for (const auto& [lang, row] : va.report.per_lang) j["accuracy"][babel::lang_name(lang)] = row.accuracy();
      j["avg_accuracy"] = va.report.mean_accuracy();
      j["alpha"] = va.alpha;
      summary["reward_acc"][v] = j;
      log_ << "reward-acc: " << v << " mean accuracy " << va.report.mean_accuracy() << '\n';
    }
    save_csv(rows, path("reports/reward_acc.csv"));
    save_summary(summary);
    artifacts.push_back("reports/reward_acc.csv");
    artifacts.push_back("reports/summary.json");
    finish("reward-acc", artifacts);
    return true;
  }

  bool run(const std::string& stage) {
    if (stage == "gen-world") return gen_world();
    if (stage == "train-sft") return train_sft();
    if (stage == "align-en") return align_en();
    if (stage == "iterate") return iterate();
    if (stage == "eval") return eval();
    if (stage == "reward-acc") return reward_acc();
    fail(ErrorKind::invalid_argument, "unknown stage '" + stage + "'");
  }

 private:
  fs::path path(const std::string& rel) const {
    const fs::path p = root_ / rel;
    fs::create_directories(p.parent_path());
    return p;
  }

  bool stamped(const std::string& stage) const {
    return manifest_.contains("stages") && manifest_["stages"].contains(stage);
  }

  void load_manifest() {
    const fs::path p = root_ / "manifest.json";
    manifest_ = {{"format", "icr-run"}, {"stages", nlohmann::ordered_json::object()}};
    if (!fs::exists(p)) return;
    std::ifstream in(p);
    try {
      manifest_ = nlohmann::ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::malformed_record, p.string() + ": " + e.what());
    }
    if (!manifest_.contains("stages")) fail(ErrorKind::malformed_record, p.string() + ": no stages");
  }

  void save_manifest() const {
    fs::create_directories(root_);
    std::ofstream out(root_ / "manifest.json", std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot write manifest in " + root_.string());
    out << manifest_.dump(2) << '\n';
  }

  nlohmann::ordered_json load_summary() const {
    const fs::path p = root_ / "reports/summary.json";
    if (!fs::exists(p)) return nlohmann::ordered_json::object();
    std::ifstream in(p);
    try {
      return nlohmann::ordered_json::parse(in);
    } catch (const nlohmann::json::exception&) {
      return nlohmann::ordered_json::object();
    }
  }

  void save_summary(nlohmann::ordered_json summary) const {
    summary["config_hash"] = config_hash(cfg_);
    std::ofstream out(path("reports/summary.json"), std::ios::trunc);
    out << summary.dump(2) << '\n';
  }

  bool artifacts_present(const std::string& stage) const {
    for (const auto& a : manifest_["stages"][stage]["artifacts"])
      if (!fs::exists(root_ / a.get<std::string>())) return false;
    return true;
  }

  // Checks the prerequisite chain, then decides between no-op and (re)run.
  bool begin(const std::string& stage) {
    for (std::string up = prerequisite(stage); !up.empty(); up = prerequisite(up)) {
      if (!stamped(up))
        fail(ErrorKind::stage_order, stage + " needs " + up + " first: " + key_artifact(up) + " is missing in " +
                                         root_.string());
      const std::string have = manifest_["stages"][up]["stage_hash"].get<std::string>();
      if (have != stage_hash(cfg_, up))
        fail(ErrorKind::config_mismatch, up + " in " + root_.string() + " was produced under config hash " + have +
                                             ", the current config gives " + stage_hash(cfg_, up) +
                                             "; re-run " + up + " with --force");
      if (!artifacts_present(up))
        fail(ErrorKind::missing_artifact, up + " is stamped but some of its artifacts are gone; re-run it with --force");
    }
    const std::string want = stage_hash(cfg_, stage);
    if (stamped(stage) && !force_) {
      const std::string have = manifest_["stages"][stage]["stage_hash"].get<std::string>();
      if (have != want)
        fail(ErrorKind::config_mismatch, stage + " already ran under config hash " + have + ", the current config gives " +
                                             want + "; pass --force to re-run it");
      if (artifacts_present(stage)) {
        log_ << stage << ": already complete with config hash " << want << "; nothing to do (--force re-runs)\n";
        return false;
      }
    }
    // Re-running invalidates everything built on this stage.
    for (const auto& s : stage_names())
      if (s != stage && depends_on(s, stage)) manifest_["stages"].erase(s);
    manifest_["stages"].erase(stage);
    save_manifest();
    log_ << stage << ": running in " << root_.string() << '\n';
    save_config(cfg_, path("config.json"));
    return true;
  }

  void finish(const std::string& stage, const std::vector<std::string>& artifacts,
              const nlohmann::ordered_json& extra = nlohmann::ordered_json::object()) {
    nlohmann::ordered_json e;
    e["stage_hash"] = stage_hash(cfg_, stage);
    e["config_hash"] = config_hash(cfg_);
    e["seed"] = cfg_.seed;
    e["artifacts"] = artifacts;
    for (const auto& [k, v] : extra.items()) e[k] = v;
    manifest_["stages"][stage] = e;
    save_manifest();
    log_ << stage << ": done, " << artifacts.size() << " artifacts\n";
  }

  fs::path root_;
  RunConfig cfg_;
  bool force_ = false;
  std::ostream& log_;
  nlohmann::ordered_json manifest_;
};

}  // namespace icr::pipeline
