#pragma once

// Verifiable rewards for policy optimisation on multiple-choice and
// binary/type answers, plus the format gate that precedes them.

#include "stablei2i/core.hpp"
#include "stablei2i/parser.hpp"

#include <algorithm>
#include <cmath>

namespace stablei2i {

struct RewardConfig
{
  double max_mc = 1.0;  // M
  double alpha = 0.5;   // false-positive penalty

  void validate() const
  {
    if (!(max_mc > 0.0) || !std::isfinite(max_mc))
      throw Error("reward config: M must be positive");
    if (!(alpha >= 0.0) || !std::isfinite(alpha))
      throw Error("reward config: alpha must be non-negative");
  }
};

enum class Gate { passed, format_failed, answer_mismatch };

inline std::string_view to_string(Gate g)
{
  switch (g) {
    case Gate::passed: return "passed";
    case Gate::format_failed: return "format_failed";
    case Gate::answer_mismatch: return "answer_mismatch";
  }
  return "passed";
}

struct RewardScore
{
  double value = 0.0;
  Gate gate = Gate::passed;

  bool operator==(const RewardScore&) const = default;
};

class InvalidGroundTruth : public Error
{
public:
  using Error::Error;
};

/// M * |pred| / |gt| when pred is a subset of gt, otherwise 0.
inline RewardScore reward_mc(LetterSet gt, LetterSet pred, const RewardConfig& cfg)
{
  if (gt.empty())
    throw InvalidGroundTruth("multiple-choice ground truth is empty");
  if (!pred.is_subset_of(gt))
    return {0.0, Gate::answer_mismatch};
  return {cfg.max_mc * static_cast<double>(pred.size()) / static_cast<double>(gt.size()),
          Gate::passed};
}

/// Binary/type reward.
///
/// Answers must agree. A Yes ground truth pays 1 only for an empty prediction,
/// NULL only for (NULL, {}). A No ground truth requires a non-empty prediction
/// and pays max(0, |P^ n P|/|P| - alpha |P^ \ P|/|P|).
inline RewardScore reward_binary(const Verdict& gt, const Verdict& pred, const RewardConfig& cfg)
{
  if (gt.answer() != pred.answer())
    return {0.0, Gate::answer_mismatch};
  switch (gt.answer()) {
    case Answer::yes:
    case Answer::null:
      return {pred.problems().empty() ? 1.0 : 0.0, Gate::passed};
    case Answer::no: {
      const auto& truth = gt.problems();
      const auto& guess = pred.problems();
      if (guess.empty() || truth.empty() || guess.dimension() != truth.dimension())
        return {0.0, Gate::passed};
      const double n = static_cast<double>(truth.size());
      const double hit = static_cast<double>(guess.intersection_size(truth)) / n;
      const double false_pos = static_cast<double>(guess.difference_size(truth)) / n;
      return {std::max(0.0, hit - cfg.alpha * false_pos), Gate::passed};
    }
  }
  return {0.0, Gate::passed};
}

struct GatedReward
{
  RewardScore score;
  std::optional<ParseFailure> parse_failure;
};

/// Parses a raw rollout and scores it; unparseable text earns 0 with gate=format_failed.
inline GatedReward score_binary_response(const Verdict& gt, std::string_view raw,
                                         const RewardConfig& cfg)
{
  auto pred = parse_verdict_text(raw, gt.dimension());
  if (!pred)
    return {{0.0, Gate::format_failed}, pred.failure()};
  return {reward_binary(gt, *pred, cfg), std::nullopt};
}

inline GatedReward score_mc_response(LetterSet gt, std::string_view raw, std::size_t option_count,
                                     const RewardConfig& cfg)
{
  if (gt.empty())
    throw InvalidGroundTruth("multiple-choice ground truth is empty");
  auto pred = parse_mc_answer_text(raw, option_count);
  if (!pred)
    return {{0.0, Gate::format_failed}, pred.failure()};
  return {reward_mc(gt, pred->letters, cfg), std::nullopt};
}

class RequestError : public Error
{
public:
  using Error::Error;
};

/// Handles one reward-service request object.
///
/// Request:  {"task": "mc"|"binary", "dimension": ..., "gt": ..., "pred_raw_text": "...",
///            "option_count"?: n, "config"?: {"M": .., "alpha": ..}}
/// Response: {"reward": x, "gate": "...", "parse_failure"?: {...}}
/// Envelope problems become {"error": "..."}.
inline json handle_reward_request(const json& req, const RewardConfig& defaults)
{
  try {
    if (!req.is_object())
      throw RequestError("request must be an object");
    if (!req.contains("task") || !req["task"].is_string())
      throw RequestError("missing task");
    if (!req.contains("pred_raw_text") || !req["pred_raw_text"].is_string())
      throw RequestError("missing pred_raw_text");
    if (!req.contains("gt"))
      throw RequestError("missing gt");

    RewardConfig cfg = defaults;
    if (req.contains("config")) {
      const auto& c = req["config"];
      if (!c.is_object())
        throw RequestError("config must be an object");
      if (c.contains("M")) {
        if (!c["M"].is_number())
          throw RequestError("config.M must be a number");
        cfg.max_mc = c["M"].get<double>();
      }
      if (c.contains("alpha")) {
        if (!c["alpha"].is_number())
          throw RequestError("config.alpha must be a number");
        cfg.alpha = c["alpha"].get<double>();
      }
      try {
        cfg.validate();
      } catch (const Error& e) {
        throw RequestError(e.what());
      }
    }

    const auto task = req["task"].get<std::string>();
    const auto raw = req["pred_raw_text"].get<std::string>();
    GatedReward result;
    if (task == "binary") {
      if (!req.contains("dimension") || !req["dimension"].is_string())
        throw RequestError("binary task requires dimension");
      auto dim = dimension_from_string(req["dimension"].get<std::string>());
      if (!dim)
        throw RequestError("unknown dimension");
      const auto& g = req["gt"];
      if (!g.is_object() || !g.contains("answer") || !g.contains("problem"))
        throw RequestError("gt must be {answer, problem}");
      std::optional<Verdict> gt;
      try {
        gt = verdict_from_fields(*dim, g["answer"], g["problem"]);
      } catch (const Error& e) {
        throw RequestError(std::string("invalid gt: ") + e.what());
      }
      result = score_binary_response(*gt, raw, cfg);
    } else if (task == "mc") {
      const json& g = req["gt"].is_object() && req["gt"].contains("answer") ? req["gt"]["answer"] : req["gt"];
      if (!g.is_array() || g.empty())
        throw RequestError("gt must be a non-empty list of letters");
      LetterSet gt;
      for (const auto& l : g) {
        if (!l.is_string() || l.get<std::string>().size() != 1 || l.get<std::string>()[0] < 'A' ||
            l.get<std::string>()[0] > 'Z')
          throw RequestError("gt letters must be single uppercase letters");
        gt.insert(l.get<std::string>()[0]);
      }
      std::size_t option_count = 26;
      if (req.contains("option_count")) {
        if (!req["option_count"].is_number_unsigned())
          throw RequestError("option_count must be a positive integer");
        option_count = req["option_count"].get<std::size_t>();
        if (option_count < 2 || option_count > 26)
          throw RequestError("option_count must be within [2, 26]");
        if (gt.bits() >> option_count)
          throw RequestError("gt letter outside option range");
      }
      result = score_mc_response(gt, raw, option_count, cfg);
    } else {
      throw RequestError("task must be mc or binary");
    }

    json resp{{"reward", result.score.value}, {"gate", std::string(to_string(result.score.gate))}};
    if (result.parse_failure)
      resp["parse_failure"] = failure_to_json(*result.parse_failure);
    return resp;
  } catch (const RequestError& e) {
    return json{{"error", e.what()}};
  } catch (const json::exception& e) {
    return json{{"error", std::string("bad request: ") + e.what()}};
  }
}

/// Handles one request line; malformed JSON yields an error object rather than an exception.
inline std::string handle_reward_line(std::string_view line, const RewardConfig& defaults)
{
  auto req = json::parse(line.begin(), line.end(), nullptr, false);
  if (req.is_discarded())
    return json{{"error", "request is not valid JSON"}}.dump();
  return handle_reward_request(req, defaults).dump(-1, ' ', false, json::error_handler_t::replace);
}

}  // namespace stablei2i
