#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "icr/babel/vocab.hpp"
#include "icr/babel/world.hpp"
#include "icr/error.hpp"
#include "icr/reward/alpha.hpp"
#include "icr/reward/rewards.hpp"
#include "icr/tokens.hpp"

namespace icr {

struct PreferencePair {
  int lang = 0;
  std::int64_t prompt_id = 0;
  TokenSeq prompt;
  TokenSeq chosen;
  TokenSeq rejected;
  double chosen_reward = 0.0;
  double rejected_reward = 0.0;

  bool operator==(const PreferencePair&) const = default;
};

struct Provenance {
  int iteration = 0;
  std::string variant = "rc";
  double beta = 0.1;
  std::vector<double> alpha;
  std::vector<std::uint64_t> seeds;
  std::string config_hash;
  std::size_t skipped = 0;

  bool operator==(const Provenance&) const = default;
};

struct PreferenceDataset {
  std::vector<PreferencePair> pairs;
  std::map<int, std::size_t> counts;  // per language
  Provenance provenance;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
  bool operator==(const PreferenceDataset&) const = default;
};

// Max-reward response versus min-reward response of one prompt's pool;
// nullopt (skip) when every reward is equal.
inline std::optional<PreferencePair> build_pair(TokenSpan prompt, const std::vector<reward::ScoredResponse>& pool) {
  if (pool.size() < 2) fail(ErrorKind::invalid_argument, "pool-too-small: a pair needs at least two responses");
  std::vector<double> rewards;
  std::vector<int> ids;
  for (const auto& s : pool) {
    rewards.push_back(s.reward);
    ids.push_back(s.sample_id);
  }
  const auto e = reward::select_extremes(rewards, ids);
  if (!e) return std::nullopt;
  const auto& c = pool[e->chosen];
  const auto& r = pool[e->rejected];
  return PreferencePair{c.lang, c.prompt_id, TokenSeq(prompt.begin(), prompt.end()), c.tokens, r.tokens,
                        c.reward, r.reward};
}

// Union over languages in canonical (lang, prompt_id) order.
inline PreferenceDataset aggregate(std::vector<PreferencePair> pairs, Provenance provenance = {}) {
  std::stable_sort(pairs.begin(), pairs.end(), [](const PreferencePair& a, const PreferencePair& b) {
    return std::pair(a.lang, a.prompt_id) < std::pair(b.lang, b.prompt_id);
  });
  PreferenceDataset d;
  d.provenance = std::move(provenance);
  for (const auto& p : pairs) ++d.counts[p.lang];
  d.pairs = std::move(pairs);
  return d;
}

// Groups scored responses by (lang, prompt), builds one pair per group, and
// aggregates. Skipped prompts are counted in provenance.skipped.
inline PreferenceDataset forge_dataset(const babel::VocabLayout& vocab, const reward::TaskBook& tasks,
                                       const std::vector<reward::ScoredResponse>& scored, Provenance provenance) {
  std::map<std::pair<int, std::int64_t>, std::vector<reward::ScoredResponse>> groups;
  for (const auto& s : scored) groups[{s.lang, s.prompt_id}].push_back(s);
  std::vector<PreferencePair> pairs;
  std::size_t skipped = 0;
  for (const auto& [key, pool] : groups) {
    const auto it = tasks.find(key.second);
    if (it == tasks.end()) fail(ErrorKind::invalid_argument, "unknown prompt id " + std::to_string(key.second));
    const TokenSeq prompt = babel::render_prompt(vocab, it->second, key.first);
    if (auto p = build_pair(prompt, pool))
      pairs.push_back(std::move(*p));
    else
      ++skipped;
  }
  provenance.skipped = skipped;
  return aggregate(std::move(pairs), std::move(provenance));
}

inline constexpr int kDatasetVersion = 1;

inline nlohmann::ordered_json provenance_to_json(const Provenance& p) {
  nlohmann::ordered_json j;
  j["iteration"] = p.iteration;
  j["variant"] = p.variant;
  j["beta"] = p.beta;
  j["alpha"] = p.alpha;
  j["seeds"] = p.seeds;
  j["config_hash"] = p.config_hash;
  j["skipped"] = p.skipped;
  return j;
}

inline Provenance provenance_from_json(const nlohmann::json& j) {
  Provenance p;
  p.iteration = j.at("iteration").get<int>();
  p.variant = j.at("variant").get<std::string>();
  p.beta = j.at("beta").get<double>();
  p.alpha = j.at("alpha").get<std::vector<double>>();
  p.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  p.config_hash = j.at("config_hash").get<std::string>();
  p.skipped = j.at("skipped").get<std::size_t>();
  return p;
}

// Dataset file: a JSON header line {format, version, provenance, count}, then
// one JSON record per pair with a fixed field order.
inline void save_dataset(const PreferenceDataset& d, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write dataset " + path.string());
  nlohmann::ordered_json header;
  header["format"] = "icr-preference-dataset";
  header["version"] = kDatasetVersion;
  header["provenance"] = provenance_to_json(d.provenance);
  header["count"] = d.pairs.size();
  out << header.dump() << '\n';
  for (const auto& p : d.pairs) {
    nlohmann::ordered_json r;
    r["lang"] = p.lang;
    r["prompt_id"] = p.prompt_id;
    r["prompt_tokens"] = p.prompt;
    r["chosen_tokens"] = p.chosen;
    r["rejected_tokens"] = p.rejected;
    r["chosen_reward"] = p.chosen_reward;
    r["rejected_reward"] = p.rejected_reward;
    r["iteration"] = d.provenance.iteration;
    r["variant"] = d.provenance.variant;
    out << r.dump() << '\n';
  }
  if (!out) fail(ErrorKind::io, "short write on dataset " + path.string());
}

inline PreferenceDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::missing_artifact, "cannot open dataset " + path.string());
  std::string line;
  std::size_t line_no = 0;
  auto malformed = [&](const std::string& why) {
    fail(ErrorKind::malformed_record, path.string() + ":" + std::to_string(line_no) + ": " + why);
  };
  if (!std::getline(in, line)) {
    line_no = 1;
    malformed("missing header");
  }
  line_no = 1;
  PreferenceDataset d;
  std::size_t expected = 0;
  try {
    const auto header = nlohmann::json::parse(line);
    if (header.at("format").get<std::string>() != "icr-preference-dataset") malformed("not a preference dataset");
    if (header.at("version").get<int>() != kDatasetVersion)
      fail(ErrorKind::version_mismatch, path.string() + ": dataset version " + header.at("version").dump());
    d.provenance = provenance_from_json(header.at("provenance"));
    expected = header.at("count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    malformed(std::string("bad header: ") + e.what());
  }
  std::vector<PreferencePair> pairs;
  while (std::getline(in, line)) {
    ++line_no;
    try {
      const auto r = nlohmann::json::parse(line);
      PreferencePair p;
      p.lang = r.at("lang").get<int>();
      p.prompt_id = r.at("prompt_id").get<std::int64_t>();
      p.prompt = r.at("prompt_tokens").get<TokenSeq>();
      p.chosen = r.at("chosen_tokens").get<TokenSeq>();
      p.rejected = r.at("rejected_tokens").get<TokenSeq>();
      p.chosen_reward = r.at("chosen_reward").get<double>();
      p.rejected_reward = r.at("rejected_reward").get<double>();
      pairs.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      malformed(std::string("bad record: ") + e.what());
    }
  }
  if (pairs.size() != expected) {
    line_no = line_no + 1;
    malformed("expected " + std::to_string(expected) + " records, found " + std::to_string(pairs.size()));
  }
  auto prov = d.provenance;
  d = aggregate(std::move(pairs), std::move(prov));
  return d;
}

}  // namespace icr
