#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "icr/babel/vocab.hpp"
#include "icr/babel/world.hpp"
#include "icr/error.hpp"
#include "icr/eval/eval.hpp"
#include "icr/reward/rewards.hpp"
#include "icr/train/trainer.hpp"

namespace icr::pipeline {

using Json = nlohmann::ordered_json;

// Line-structured files: one JSON object per line, fixed key order.
class LineWriter {
 public:
  explicit LineWriter(const std::filesystem::path& path) : path_(path), out_(path, std::ios::trunc) {
    if (!out_) fail(ErrorKind::io, "cannot write " + path.string());
  }
  void write(const Json& j) { out_ << j.dump() << '\n'; }
  void close() {
    out_.close();
    if (!out_) fail(ErrorKind::io, "short write on " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

inline void read_lines(const std::filesystem::path& path, const std::function<void(const nlohmann::json&)>& each) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::missing_artifact, "cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      each(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::malformed_record, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

// Prompt splits: {prompt_id, content}.
inline void save_prompts(const std::vector<babel::TaskInstance>& tasks, const std::filesystem::path& path) {
  LineWriter w(path);
  for (const auto& t : tasks) {
    Json j;
    j["prompt_id"] = t.id;
    j["content"] = t.content;
    w.write(j);
  }
  w.close();
}

inline std::vector<babel::TaskInstance> load_prompts(const std::filesystem::path& path) {
  std::vector<babel::TaskInstance> out;
  read_lines(path, [&](const nlohmann::json& j) {
    out.push_back({j.at("prompt_id").get<std::int64_t>(), j.at("content").get<std::vector<int>>()});
  });
  return out;
}

// SFT corpus: {lang, prompt_tokens, response_tokens, meta}.
inline void save_corpus(const std::vector<babel::Demonstration>& corpus, const std::filesystem::path& path) {
  LineWriter w(path);
  for (const auto& d : corpus) {
    Json j;
    j["lang"] = d.lang;
    j["prompt_tokens"] = d.prompt;
    j["response_tokens"] = d.response;
    j["meta"] = {{"prompt_id", d.prompt_id},
                 {"corrupted", d.corrupted},
                 {"crosslingual", d.crosslingual},
                 {"truncated", d.truncated}};
    w.write(j);
  }
  w.close();
}

inline std::vector<babel::Demonstration> load_corpus(const std::filesystem::path& path) {
  std::vector<babel::Demonstration> out;
  read_lines(path, [&](const nlohmann::json& j) {
    babel::Demonstration d;
    d.lang = j.at("lang").get<int>();
    d.prompt = j.at("prompt_tokens").get<TokenSeq>();
    d.response = j.at("response_tokens").get<TokenSeq>();
    const auto& m = j.at("meta");
    d.prompt_id = m.at("prompt_id").get<std::int64_t>();
    d.corrupted = m.at("corrupted").get<bool>();
    d.crosslingual = m.at("crosslingual").get<bool>();
    d.truncated = m.at("truncated").get<bool>();
    out.push_back(std::move(d));
  });
  return out;
}

// Sampled pools: {lang, prompt_id, sample_id, tokens}.
inline void save_samples(const std::vector<reward::ScoredResponse>& pool, const std::filesystem::path& path) {
  LineWriter w(path);
  for (const auto& r : pool) {
    Json j;
    j["lang"] = r.lang;
    j["prompt_id"] = r.prompt_id;
    j["sample_id"] = r.sample_id;
    j["tokens"] = r.tokens;
    w.write(j);
  }
  w.close();
}

inline std::vector<reward::SampledResponse> load_samples(const std::filesystem::path& path) {
  std::vector<reward::SampledResponse> out;
  read_lines(path, [&](const nlohmann::json& j) {
    out.push_back({j.at("lang").get<int>(), j.at("prompt_id").get<std::int64_t>(), j.at("sample_id").get<int>(),
                   j.at("tokens").get<TokenSeq>()});
  });
  return out;
}

// Scored pools: {lang, prompt_id, sample_id, reward, length, variant, beta, alpha}.
inline void save_scored(const std::vector<reward::ScoredResponse>& pool, const std::string& variant, double beta,
                        const std::vector<double>& alpha, const std::filesystem::path& path) {
  LineWriter w(path);
  for (const auto& r : pool) {
    Json j;
    j["lang"] = r.lang;
    j["prompt_id"] = r.prompt_id;
    j["sample_id"] = r.sample_id;
    j["reward"] = r.reward;
    j["length"] = r.token_count;
    j["variant"] = variant;
    j["beta"] = beta;
    j["alpha"] = static_cast<std::size_t>(r.lang) < alpha.size() ? alpha[static_cast<std::size_t>(r.lang)] : 0.0;
    w.write(j);
  }
  w.close();
}

// Metrics log: {step, lr, loss, loss_components}.
inline void save_step_log(const train::StepLog& log, const std::filesystem::path& path) {
  LineWriter w(path);
  for (const auto& s : log) {
    Json j;
    j["step"] = s.step;
    j["lr"] = s.lr;
    j["loss"] = s.loss;
    j["loss_components"] = s.components;
    w.write(j);
  }
  w.close();
}

// Comma-separated report: one row per language per metric.
struct CsvRow {
  std::string lang;
  std::string metric;
  double value = 0.0;
};

inline void save_csv(const std::vector<CsvRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out << "lang,metric,value\n";
  out.precision(10);
  for (const auto& r : rows) out << r.lang << ',' << r.metric << ',' << r.value << '\n';
  if (!out) fail(ErrorKind::io, "short write on " + path.string());
}

inline std::vector<CsvRow> winrate_rows(const eval::WinRateReport& rep, const eval::LengthStats& lengths) {
  std::vector<CsvRow> rows;
  for (const auto& [lang, r] : rep.per_lang) {
    const std::string name = babel::lang_name(lang);
    rows.push_back({name, "win_rate", r.win_rate()});
    rows.push_back({name, "wins", static_cast<double>(r.wins)});
    rows.push_back({name, "losses", static_cast<double>(r.losses)});
    rows.push_back({name, "ties", static_cast<double>(r.ties)});
    if (auto it = lengths.find(lang); it != lengths.end())
      rows.push_back({name, "mean_generated_length", it->second.mean_generated});
  }
  rows.push_back({"avg_non_en", "win_rate", rep.mean_win_rate(true)});
  return rows;
}

inline std::vector<CsvRow> accuracy_rows(const std::string& prefix, const eval::RewardAccuracyReport& rep,
                                         const eval::LengthStats& lengths) {
  std::vector<CsvRow> rows;
  for (const auto& [lang, r] : rep.per_lang) {
    const std::string name = babel::lang_name(lang);
    rows.push_back({name, prefix + "accuracy", r.accuracy()});
    rows.push_back({name, prefix + "correct", static_cast<double>(r.correct)});
    rows.push_back({name, prefix + "incorrect", static_cast<double>(r.incorrect)});
    rows.push_back({name, prefix + "ties", static_cast<double>(r.ties)});
    if (auto it = lengths.find(lang); it != lengths.end()) {
      rows.push_back({name, prefix + "mean_chosen_length", it->second.mean_chosen});
      rows.push_back({name, prefix + "mean_rejected_length", it->second.mean_rejected});
    }
  }
  rows.push_back({"avg", prefix + "accuracy", rep.mean_accuracy()});
  return rows;
}

}  // namespace icr::pipeline
