#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "icr/babel/vocab.hpp"
#include "icr/babel/world.hpp"
#include "icr/error.hpp"
#include "icr/eval/eval.hpp"
#include "icr/lm/model.hpp"
#include "icr/reward/rewards.hpp"
#include "icr/sampler.hpp"
#include "icr/train/trainer.hpp"

namespace icr::pipeline {

struct AlignConfig {
  train::TrainConfig train = [] {
    train::TrainConfig t;
    t.loss = train::LossKind::dpo;
    t.peak_lr = 1e-4;
    return t;
  }();
  int samples_per_prompt = 10;
};

struct RewardStageConfig {
  reward::Variant variant = reward::Variant::rc;
  double beta = 0.1;
  reward::ReferencePolicy reference = reward::ReferencePolicy::initial;
  double translate_noise = 0.0;
  bool optimize_alpha = true;
  int alpha_grid_points = 40;
  double alpha_min = 1e-4;
  double alpha_max = 1.0;
};

struct RewardAccConfig {
  double translate_noise = 0.1;
};

// One file drives every stage; flags override it.
struct RunConfig {
  std::uint64_t seed = 1;
  babel::WorldConfig world;
  lm::ModelConfig model;
  double init_std = 0.02;
  train::SftConfig sft = [] {
    train::SftConfig s;
    s.peak_lr = 1e-2;
    s.epochs = 3;
    s.batch_size = 32;
    return s;
  }();
  AlignConfig align;
  SamplingConfig sampling;
  RewardStageConfig reward;
  train::TrainConfig train = [] {
    train::TrainConfig t;
    t.loss = train::LossKind::dpo_nll;
    t.peak_lr = 2e-5;
    return t;
  }();
  int iterations = 2;
  eval::DecodeConfig eval;
  RewardAccConfig reward_acc;

  babel::VocabLayout vocab() const { return babel::make_vocab(world.num_langs, world.alphabet); }

  lm::ModelConfig model_config() const {
    lm::ModelConfig m = model;
    m.vocab_size = vocab().vocab_size();
    return m;
  }

  void validate() const {
    world.validate();
    model_config().validate();
    sampling.validate();
    align.train.validate();
    train.validate();
    require(iterations >= 0, ErrorKind::invalid_argument, "iterations must be >= 0");
    require(align.samples_per_prompt >= 2, ErrorKind::invalid_argument, "align needs >= 2 samples per prompt");
    require(reward.beta > 0, ErrorKind::invalid_argument, "reward beta must be positive");
    require(reward.alpha_grid_points >= 1 && reward.alpha_min > 0 && reward.alpha_max >= reward.alpha_min,
            ErrorKind::invalid_argument, "bad alpha grid");
    require(sft.epochs >= 1 && sft.batch_size >= 1, ErrorKind::invalid_argument, "bad sft schedule");
    const int longest_prompt = world.k_max + 4;
    require(longest_prompt + std::max(sampling.max_new_tokens, eval.max_new_tokens) <= model.context_len,
            ErrorKind::invalid_argument, "context_len too small for prompts plus max_new_tokens");
  }
};

namespace detail {

template <class T>
void get_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline nlohmann::ordered_json train_to_json(const train::TrainConfig& t) {
  nlohmann::ordered_json j;
  j["loss"] = train::to_string(t.loss);
  j["beta"] = t.beta;
  j["peak_lr"] = t.peak_lr;
  j["batch_size"] = t.batch_size;
  j["epochs"] = t.epochs;
  j["warmup_fraction"] = t.warmup_fraction;
  j["weight_decay"] = t.weight_decay;
  j["lambda_w"] = t.lambda_w;
  j["lambda_l"] = t.lambda_l;
  return j;
}

inline void train_from_json(const nlohmann::json& j, train::TrainConfig& t) {
  if (j.contains("loss")) t.loss = train::parse_loss(j.at("loss").get<std::string>());
  get_if(j, "beta", t.beta);
  get_if(j, "peak_lr", t.peak_lr);
  get_if(j, "batch_size", t.batch_size);
  get_if(j, "epochs", t.epochs);
  get_if(j, "warmup_fraction", t.warmup_fraction);
  get_if(j, "weight_decay", t.weight_decay);
  get_if(j, "lambda_w", t.lambda_w);
  get_if(j, "lambda_l", t.lambda_l);
}

}  // namespace detail

inline nlohmann::ordered_json world_to_json(const babel::WorldConfig& w) {
  nlohmann::ordered_json j;
  j["num_langs"] = w.num_langs;
  j["alphabet"] = w.alphabet;
  j["k_min"] = w.k_min;
  j["k_max"] = w.k_max;
  j["defect_rate"] = w.defect_rate;
  j["crosslingual_fraction"] = w.crosslingual_fraction;
  j["truncation_rate_en"] = w.truncation_rate_en;
  j["truncation_rate_other"] = w.truncation_rate_other;
  j["verbosity_weight"] = w.verbosity_weight;
  j["n_sft"] = w.n_sft;
  j["n_align"] = w.n_align;
  j["n_iterate"] = w.n_iterate;
  j["n_eval"] = w.n_eval;
  return j;
}

inline nlohmann::ordered_json to_json(const RunConfig& c) {
  using detail::train_to_json;
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["world"] = world_to_json(c.world);
  j["model"] = {{"mode", lm::to_string(c.model.mode)},
                {"context_len", c.model.context_len},
                {"d_model", c.model.d_model},
                {"n_layers", c.model.n_layers},
                {"n_heads", c.model.n_heads},
                {"mlp_ratio", c.model.mlp_ratio},
                {"init_std", c.init_std}};
  j["sft"] = {{"peak_lr", c.sft.peak_lr},
              {"batch_size", c.sft.batch_size},
              {"epochs", c.sft.epochs},
              {"warmup_fraction", c.sft.warmup_fraction},
              {"weight_decay", c.sft.weight_decay}};
  j["align"] = train_to_json(c.align.train);
  j["align"]["samples_per_prompt"] = c.align.samples_per_prompt;
  j["sampling"] = {{"n", c.sampling.n},
                   {"temperature", c.sampling.temperature},
                   {"top_p", c.sampling.top_p},
                   {"max_new_tokens", c.sampling.max_new_tokens}};
  j["reward"] = {{"variant", reward::to_string(c.reward.variant)},
                 {"beta", c.reward.beta},
                 {"reference", reward::to_string(c.reward.reference)},
                 {"translate_noise", c.reward.translate_noise},
                 {"optimize_alpha", c.reward.optimize_alpha},
                 {"alpha_grid_points", c.reward.alpha_grid_points},
                 {"alpha_min", c.reward.alpha_min},
                 {"alpha_max", c.reward.alpha_max}};
  j["train"] = train_to_json(c.train);
  j["iterations"] = c.iterations;
  j["eval"] = {{"greedy", c.eval.greedy},
               {"temperature", c.eval.temperature},
               {"top_p", c.eval.top_p},
               {"max_new_tokens", c.eval.max_new_tokens}};
  j["reward_acc"] = {{"translate_noise", c.reward_acc.translate_noise}};
  return j;
}

// Missing keys keep their defaults; unknown top-level keys are rejected.
inline RunConfig from_json(const nlohmann::json& j) {
  using detail::get_if;
  static const char* known[] = {"seed",   "world",      "model", "sft",  "align",     "sampling",
                                "reward", "train",      "iterations", "eval", "reward_acc"};
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) fail(ErrorKind::invalid_argument, "unknown config key '" + key + "'");
  }
  RunConfig c;
  try {
    get_if(j, "seed", c.seed);
    get_if(j, "iterations", c.iterations);
    if (j.contains("world")) {
      const auto& w = j.at("world");
      get_if(w, "num_langs", c.world.num_langs);
      get_if(w, "alphabet", c.world.alphabet);
      get_if(w, "k_min", c.world.k_min);
      get_if(w, "k_max", c.world.k_max);
      get_if(w, "defect_rate", c.world.defect_rate);
      get_if(w, "crosslingual_fraction", c.world.crosslingual_fraction);
      get_if(w, "truncation_rate_en", c.world.truncation_rate_en);
      get_if(w, "truncation_rate_other", c.world.truncation_rate_other);
      get_if(w, "verbosity_weight", c.world.verbosity_weight);
      get_if(w, "n_sft", c.world.n_sft);
      get_if(w, "n_align", c.world.n_align);
      get_if(w, "n_iterate", c.world.n_iterate);
      get_if(w, "n_eval", c.world.n_eval);
    }
    if (j.contains("model")) {
      const auto& m = j.at("model");
      if (m.contains("mode")) c.model.mode = lm::parse_mode(m.at("mode").get<std::string>());
      get_if(m, "context_len", c.model.context_len);
      get_if(m, "d_model", c.model.d_model);
      get_if(m, "n_layers", c.model.n_layers);
      get_if(m, "n_heads", c.model.n_heads);
      get_if(m, "mlp_ratio", c.model.mlp_ratio);
      get_if(m, "init_std", c.init_std);
    }
    if (j.contains("sft")) {
      const auto& s = j.at("sft");
      get_if(s, "peak_lr", c.sft.peak_lr);
      get_if(s, "batch_size", c.sft.batch_size);
      get_if(s, "epochs", c.sft.epochs);
      get_if(s, "warmup_fraction", c.sft.warmup_fraction);
      get_if(s, "weight_decay", c.sft.weight_decay);
    }
    if (j.contains("align")) {
      detail::train_from_json(j.at("align"), c.align.train);
      get_if(j.at("align"), "samples_per_prompt", c.align.samples_per_prompt);
    }
    if (j.contains("sampling")) {
      const auto& s = j.at("sampling");
      get_if(s, "n", c.sampling.n);
      get_if(s, "temperature", c.sampling.temperature);
      get_if(s, "top_p", c.sampling.top_p);
      get_if(s, "max_new_tokens", c.sampling.max_new_tokens);
    }
    if (j.contains("reward")) {
      const auto& r = j.at("reward");
      if (r.contains("variant")) c.reward.variant = reward::parse_variant(r.at("variant").get<std::string>());
      if (r.contains("reference"))
        c.reward.reference = reward::parse_reference(r.at("reference").get<std::string>());
      get_if(r, "beta", c.reward.beta);
      get_if(r, "translate_noise", c.reward.translate_noise);
      get_if(r, "optimize_alpha", c.reward.optimize_alpha);
      get_if(r, "alpha_grid_points", c.reward.alpha_grid_points);
      get_if(r, "alpha_min", c.reward.alpha_min);
      get_if(r, "alpha_max", c.reward.alpha_max);
    }
    if (j.contains("train")) detail::train_from_json(j.at("train"), c.train);
    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      get_if(e, "greedy", c.eval.greedy);
      get_if(e, "temperature", c.eval.temperature);
      get_if(e, "top_p", c.eval.top_p);
      get_if(e, "max_new_tokens", c.eval.max_new_tokens);
    }
    if (j.contains("reward_acc")) get_if(j.at("reward_acc"), "translate_noise", c.reward_acc.translate_noise);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::invalid_argument, std::string("bad config value: ") + e.what());
  }
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::missing_artifact, "cannot open config " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::malformed_record, path.string() + ": " + e.what());
  }
}

inline void save_config(const RunConfig& c, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out << to_json(c).dump(2) << '\n';
}

// 64-bit FNV-1a, rendered as 16 hex digits.
inline std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Stage hashes cover the config sections a stage (and everything upstream of
// it) depends on, so changing iteration settings leaves earlier stages valid.
inline std::string stage_hash(const RunConfig& c, const std::string& stage) {
  const auto j = to_json(c);
  nlohmann::ordered_json part;
  part["seed"] = j["seed"];
  part["world"] = j["world"];
  if (stage == "gen-world") return fnv1a_hex(part.dump());
  part["model"] = j["model"];
  part["sft"] = j["sft"];
  if (stage == "train-sft") return fnv1a_hex(part.dump());
  part["align"] = j["align"];
  part["sampling"] = j["sampling"];
  if (stage == "align-en") return fnv1a_hex(part.dump());
  if (stage == "reward-acc") {
    part["reward"] = j["reward"];
    part["reward_acc"] = j["reward_acc"];
    return fnv1a_hex(part.dump());
  }
  part["reward"] = j["reward"];
  part["train"] = j["train"];
  part["iterations"] = j["iterations"];
  if (stage == "iterate") return fnv1a_hex(part.dump());
  part["eval"] = j["eval"];
  if (stage == "eval") return fnv1a_hex(part.dump());
  fail(ErrorKind::invalid_argument, "unknown stage '" + stage + "'");
}

inline std::string config_hash(const RunConfig& c) { return fnv1a_hex(to_json(c).dump()); }

}  // namespace icr::pipeline
