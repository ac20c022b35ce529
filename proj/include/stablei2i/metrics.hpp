#pragma once

// Aggregation of verdict records into accuracy, fidelity and agreement
// statistics, and their serialization (JSON object, Markdown, CSV).

#include "stablei2i/core.hpp"
#include "stablei2i/manifest.hpp"
#include "stablei2i/parser.hpp"
#include "stablei2i/rewards.hpp"

#include <cmath>
#include <cstdio>
#include <mutex>
#include <sstream>

namespace stablei2i {

inline constexpr std::string_view kEvalReportSchema = "stablei2i.eval_report/1";
inline constexpr std::string_view kFidelityReportSchema = "stablei2i.fidelity_report/1";
inline constexpr std::string_view kMcReportSchema = "stablei2i.mc_report/1";
inline constexpr std::string_view kRecordSchema = "stablei2i.record/1";

class EmptyDimension : public Error
{
public:
  explicit EmptyDimension(Dimension d)
      : Error("no records for dimension " + std::string(to_string(d))), dimension_(d)
  {
  }
  Dimension dimension() const { return dimension_; }

private:
  Dimension dimension_;
};

class IncompleteVerdicts : public Error
{
public:
  using Error::Error;
};

/// One judged sample. Exactly one of `pred`, `parse_failure`, `request_failure` is set.
struct EvalRecord
{
  std::string sample_id;
  Dimension dimension = Dimension::structure;
  std::optional<Verdict> gt;
  std::optional<Verdict> pred;
  std::optional<ParseFailure> parse_failure;
  std::optional<std::string> request_failure;
  std::string raw_ref;
  std::string model_id;
  std::string template_id;
  std::string template_fingerprint;

  static EvalRecord from_outcome(std::string id, Dimension d, std::optional<Verdict> gt,
                                 const ParseOutcome<Verdict>& outcome)
  {
    EvalRecord r;
    r.sample_id = std::move(id);
    r.dimension = d;
    r.gt = std::move(gt);
    if (outcome)
      r.pred = *outcome;
    else
      r.parse_failure = outcome.failure();
    return r;
  }

  bool matches(MatchMode mode) const { return gt && pred && verdict_matches(*gt, *pred, mode); }
};

struct DimensionTally
{
  std::size_t n = 0;
  std::size_t binary_correct = 0;
  std::size_t strict_correct = 0;
  std::size_t with_gt = 0;
  std::size_t yes = 0;
  std::size_t no = 0;
  std::size_t null = 0;
  std::array<std::size_t, 4> parse_failures{};
  std::size_t request_failures = 0;

  std::size_t parse_failure_total() const
  {
    std::size_t s = 0;
    for (auto c : parse_failures)
      s += c;
    return s;
  }

  void merge(const DimensionTally& o)
  {
    n += o.n;
    binary_correct += o.binary_correct;
    strict_correct += o.strict_correct;
    with_gt += o.with_gt;
    yes += o.yes;
    no += o.no;
    null += o.null;
    for (std::size_t i = 0; i < parse_failures.size(); ++i)
      parse_failures[i] += o.parse_failures[i];
    request_failures += o.request_failures;
  }

  bool operator==(const DimensionTally&) const = default;
};

/// Merge-only accumulator; safe to feed from concurrent producers.
class MetricsAccumulator
{
public:
  void add(const EvalRecord& r)
  {
    DimensionTally t;
    t.n = 1;
    if (r.gt) {
      t.with_gt = 1;
      t.binary_correct = r.matches(MatchMode::binary) ? 1 : 0;
      t.strict_correct = r.matches(MatchMode::strict) ? 1 : 0;
    }
    if (r.pred) {
      switch (r.pred->answer()) {
        case Answer::yes: t.yes = 1; break;
        case Answer::no: t.no = 1; break;
        case Answer::null: t.null = 1; break;
      }
    } else if (r.parse_failure) {
      t.parse_failures[static_cast<std::size_t>(r.parse_failure->reason)] = 1;
    } else {
      t.request_failures = 1;
    }
    std::lock_guard lock(mu_);
    tallies_[index_of(r.dimension)].merge(t);
  }

  void merge(const MetricsAccumulator& other)
  {
    auto snap = other.snapshot();
    std::lock_guard lock(mu_);
    for (std::size_t i = 0; i < tallies_.size(); ++i)
      tallies_[i].merge(snap[i]);
  }

  std::array<DimensionTally, 3> snapshot() const
  {
    std::lock_guard lock(mu_);
    return tallies_;
  }

private:
  mutable std::mutex mu_;
  std::array<DimensionTally, 3> tallies_{};
};

inline std::array<DimensionTally, 3> tally(std::span<const EvalRecord> records)
{
  MetricsAccumulator acc;
  for (const auto& r : records)
    acc.add(r);
  return acc.snapshot();
}

inline double percent(std::size_t part, std::size_t whole)
{
  return whole == 0 ? 0.0 : 100.0 * static_cast<double>(part) / static_cast<double>(whole);
}

/// Rounds to `digits` decimals, used for every number that lands in a report.
inline double round_to(double x, int digits)
{
  const double scale = std::pow(10.0, digits);
  return std::round(x * scale) / scale;
}

inline std::string fixed(double x, int digits)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

struct AccuracyResult
{
  std::map<Dimension, double> per_dimension;  // percent
  double average = 0.0;                        // unweighted mean over the requested dimensions
};

namespace metrics_detail {

inline AccuracyResult accuracy(std::span<const EvalRecord> records, std::span<const Dimension> dims,
                               MatchMode mode)
{
  auto t = tally(records);
  AccuracyResult out;
  for (auto d : dims) {
    const auto& dt = t[index_of(d)];
    if (dt.with_gt == 0)
      throw EmptyDimension(d);
    out.per_dimension[d] =
        percent(mode == MatchMode::binary ? dt.binary_correct : dt.strict_correct, dt.with_gt);
  }
  double sum = 0.0;
  for (const auto& [d, v] : out.per_dimension)
    sum += v;
  out.average = dims.empty() ? 0.0 : sum / static_cast<double>(dims.size());
  return out;
}

}  // namespace metrics_detail

/// Percent of records whose answer flag matches ground truth; failures count as incorrect.
inline AccuracyResult binary_accuracy(std::span<const EvalRecord> records,
                                      std::span<const Dimension> dims = kAllDimensions)
{
  return metrics_detail::accuracy(records, dims, MatchMode::binary);
}

/// As binary_accuracy, additionally requiring the exact problem-type set.
inline AccuracyResult strict_accuracy(std::span<const EvalRecord> records,
                                      std::span<const Dimension> dims = kAllDimensions)
{
  return metrics_detail::accuracy(records, dims, MatchMode::strict);
}

struct EvalReport
{
  std::vector<Dimension> dimensions;
  std::array<DimensionTally, 3> tallies{};
  AccuracyResult binary;
  AccuracyResult strict;
  json metadata = json::object();
};

inline EvalReport build_eval_report(std::span<const EvalRecord> records,
                                    std::span<const Dimension> dims = kAllDimensions,
                                    json metadata = json::object())
{
  EvalReport rep;
  rep.dimensions.assign(dims.begin(), dims.end());
  rep.tallies = tally(records);
  rep.binary = binary_accuracy(records, dims);
  rep.strict = strict_accuracy(records, dims);
  rep.metadata = std::move(metadata);
  return rep;
}

/// Dimensions that actually occur in a record set, in canonical order.
inline std::vector<Dimension> present_dimensions(std::span<const EvalRecord> records)
{
  std::array<bool, 3> seen{};
  for (const auto& r : records)
    seen[index_of(r.dimension)] = true;
  std::vector<Dimension> out;
  for (auto d : kAllDimensions)
    if (seen[index_of(d)])
      out.push_back(d);
  return out;
}

struct FidelityReport
{
  std::vector<Dimension> dimensions;
  std::map<Dimension, double> proportion;  // Yes / all records, in [0, 1]
  std::map<Dimension, std::size_t> n;
  double average = 0.0;
  json metadata = json::object();
};

/// Share of records judged Yes per dimension. NULL, No and failures count only in the denominator.
inline FidelityReport i2i_fidelity_score(std::span<const EvalRecord> records,
                                         std::span<const Dimension> dims = kAllDimensions)
{
  auto t = tally(records);
  FidelityReport rep;
  rep.dimensions.assign(dims.begin(), dims.end());
  double sum = 0.0;
  for (auto d : dims) {
    const auto& dt = t[index_of(d)];
    if (dt.n == 0)
      throw EmptyDimension(d);
    rep.proportion[d] = static_cast<double>(dt.yes) / static_cast<double>(dt.n);
    rep.n[d] = dt.n;
    sum += rep.proportion[d];
  }
  rep.average = dims.empty() ? 0.0 : sum / static_cast<double>(dims.size());
  return rep;
}

enum class Preference { a, b, tie };

inline std::string_view to_string(Preference p)
{
  switch (p) {
    case Preference::a: return "A";
    case Preference::b: return "B";
    case Preference::tie: return "tie";
  }
  return "tie";
}

inline std::optional<Preference> preference_from_string(std::string_view s)
{
  if (s == "A" || s == "a") return Preference::a;
  if (s == "B" || s == "b") return Preference::b;
  if (s == "tie") return Preference::tie;
  return std::nullopt;
}

struct PreferencePair
{
  std::vector<EvalRecord> a;
  std::vector<EvalRecord> b;
  Preference human = Preference::tie;
};

/// Number of dimensions judged Yes; every dimension must be covered.
inline std::size_t yes_count(std::span<const EvalRecord> candidate)
{
  std::array<bool, 3> covered{};
  std::size_t yes = 0;
  for (const auto& r : candidate) {
    covered[index_of(r.dimension)] = true;
    if (r.pred && r.pred->answer() == Answer::yes)
      ++yes;
  }
  for (auto d : kAllDimensions)
    if (!covered[index_of(d)])
      throw IncompleteVerdicts("candidate lacks a verdict for " + std::string(to_string(d)));
  return yes;
}

/// The candidate with more Yes verdicts across the three dimensions; equal counts tie.
inline Preference model_preference(const PreferencePair& pair)
{
  auto ya = yes_count(pair.a);
  auto yb = yes_count(pair.b);
  if (ya > yb) return Preference::a;
  if (yb > ya) return Preference::b;
  return Preference::tie;
}

/// Percent of pairs where the Yes-count preference equals the human choice.
inline double preference_agreement(std::span<const PreferencePair> pairs)
{
  if (pairs.empty())
    throw Error("preference agreement needs at least one pair");
  std::size_t agree = 0;
  for (const auto& p : pairs)
    if (model_preference(p) == p.human)
      ++agree;
  return percent(agree, pairs.size());
}

// ---------------------------------------------------------------------------
// Records

inline json record_to_json(const EvalRecord& r)
{
  json j;
  j["schema"] = std::string(kRecordSchema);
  j["id"] = r.sample_id;
  j["dimension"] = std::string(to_string(r.dimension));
  j["gt"] = r.gt ? verdict_to_json(*r.gt) : json(nullptr);
  if (r.pred)
    j["pred"] = {{"status", "ok"}, {"verdict", verdict_to_json(*r.pred)}};
  else if (r.parse_failure)
    j["pred"] = {{"status", "parse_failure"}, {"failure", failure_to_json(*r.parse_failure)}};
  else
    j["pred"] = {{"status", "request_failure"}, {"error", r.request_failure.value_or("")}};
  j["raw_ref"] = r.raw_ref;
  j["model_id"] = r.model_id;
  j["template_id"] = r.template_id;
  j["template_fingerprint"] = r.template_fingerprint;
  return j;
}

inline EvalRecord record_from_json(const json& j)
{
  EvalRecord r;
  r.sample_id = j.at("id").get<std::string>();
  auto dim = dimension_from_string(j.at("dimension").get<std::string>());
  if (!dim)
    throw SchemaError("record " + r.sample_id + ": unknown dimension");
  r.dimension = *dim;
  if (!j.at("gt").is_null())
    r.gt = verdict_from_fields(*dim, j["gt"].at("answer"), j["gt"].at("problem"));
  const auto& pred = j.at("pred");
  const auto status = pred.at("status").get<std::string>();
  if (status == "ok") {
    r.pred = verdict_from_fields(*dim, pred.at("verdict").at("answer"), pred["verdict"].at("problem"));
  } else if (status == "parse_failure") {
    const auto& f = pred.at("failure");
    auto reason = failure_reason_from_string(f.at("reason").get<std::string>());
    if (!reason)
      throw SchemaError("record " + r.sample_id + ": unknown failure reason");
    r.parse_failure = ParseFailure{*reason, f.at("excerpt").get<std::string>(), f.value("detail", "")};
  } else if (status == "request_failure") {
    r.request_failure = pred.at("error").get<std::string>();
  } else {
    throw SchemaError("record " + r.sample_id + ": unknown status " + status);
  }
  r.raw_ref = j.value("raw_ref", "");
  r.model_id = j.value("model_id", "");
  r.template_id = j.value("template_id", "");
  r.template_fingerprint = j.value("template_fingerprint", "");
  return r;
}

inline std::vector<EvalRecord> load_records(const std::filesystem::path& file)
{
  std::vector<EvalRecord> out;
  manifest_detail::read_lines(file, [&](const json& row) { out.push_back(record_from_json(row)); });
  return out;
}

/// Records sorted by sample id (then dimension) so exports never depend on completion order.
inline void sort_records(std::vector<EvalRecord>& records)
{
  std::sort(records.begin(), records.end(), [](const EvalRecord& x, const EvalRecord& y) {
    if (x.sample_id != y.sample_id)
      return x.sample_id < y.sample_id;
    return x.dimension < y.dimension;
  });
}

// ---------------------------------------------------------------------------
// Report serialization

inline json eval_report_to_json(const EvalReport& rep)
{
  json dims = json::object();
  for (auto d : rep.dimensions) {
    const auto& t = rep.tallies[index_of(d)];
    json pf = json::object();
    for (auto r : kAllFailureReasons)
      pf[std::string(to_string(r))] = t.parse_failures[static_cast<std::size_t>(r)];
    dims[std::string(to_string(d))] = {
        {"n", t.with_gt},
        {"binary_correct", t.binary_correct},
        {"strict_correct", t.strict_correct},
        {"binary_acc", round_to(rep.binary.per_dimension.at(d), 2)},
        {"strict_acc", round_to(rep.strict.per_dimension.at(d), 2)},
        {"parse_failures", pf},
        {"parse_failures_total", t.parse_failure_total()},
        {"request_failures", t.request_failures},
    };
  }
  return json{{"schema", std::string(kEvalReportSchema)},
              {"dimensions", dims},
              {"average", {{"binary_acc", round_to(rep.binary.average, 2)},
                           {"strict_acc", round_to(rep.strict.average, 2)}}},
              {"failure_policy", "parse and request failures are scored as incorrect"},
              {"metadata", rep.metadata}};
}

inline std::string eval_report_to_markdown(const EvalReport& rep)
{
  const std::string model = rep.metadata.value("model_id", std::string("model"));
  auto cell = [&](const AccuracyResult& acc, Dimension d) {
    auto it = acc.per_dimension.find(d);
    return it == acc.per_dimension.end() ? std::string("-") : fixed(it->second, 2);
  };
  std::ostringstream md;
  md << "| Models | Binary Accuracy | | | | Strict Accuracy | | | |\n";
  md << "|---|---|---|---|---|---|---|---|---|\n";
  md << "| | Structure | Semantic | Low-level | Avg. | Structure | Semantic | Low-level | Avg. |\n";
  md << "| " << model;
  for (auto d : kAllDimensions)
    md << " | " << cell(rep.binary, d);
  md << " | " << fixed(rep.binary.average, 2);
  for (auto d : kAllDimensions)
    md << " | " << cell(rep.strict, d);
  md << " | " << fixed(rep.strict.average, 2) << " |\n\n";

  md << "| Failures | Structure | Semantic | Low-level |\n";
  md << "|---|---|---|---|\n";
  auto failure_row = [&](std::string_view label, auto&& get) {
    md << "| " << label;
    for (auto d : kAllDimensions)
      md << " | " << get(rep.tallies[index_of(d)]);
    md << " |\n";
  };
  for (auto r : kAllFailureReasons)
    failure_row(to_string(r), [r](const DimensionTally& t) {
      return t.parse_failures[static_cast<std::size_t>(r)];
    });
  failure_row("request", [](const DimensionTally& t) { return t.request_failures; });
  failure_row("n", [](const DimensionTally& t) { return t.with_gt; });
  md << "\nParse and request failures are scored as incorrect in both metrics.\n";
  return md.str();
}

inline std::string eval_report_to_csv(const EvalReport& rep)
{
  std::ostringstream csv;
  csv << "metric,structure,semantic,low_level,avg\n";
  auto row = [&](std::string_view name, const AccuracyResult& acc) {
    csv << name;
    for (auto d : kAllDimensions) {
      auto it = acc.per_dimension.find(d);
      csv << ',' << (it == acc.per_dimension.end() ? std::string() : fixed(it->second, 2));
    }
    csv << ',' << fixed(acc.average, 2) << '\n';
  };
  row("binary_acc", rep.binary);
  row("strict_acc", rep.strict);
  auto count_row = [&](std::string_view name, auto&& get) {
    csv << name;
    for (auto d : kAllDimensions)
      csv << ',' << get(rep.tallies[index_of(d)]);
    csv << ",\n";
  };
  count_row("n", [](const DimensionTally& t) { return t.with_gt; });
  for (auto r : kAllFailureReasons)
    count_row("parse_failures_" + std::string(to_string(r)), [r](const DimensionTally& t) {
      return t.parse_failures[static_cast<std::size_t>(r)];
    });
  count_row("request_failures", [](const DimensionTally& t) { return t.request_failures; });
  return csv.str();
}

inline json fidelity_report_to_json(const FidelityReport& rep)
{
  json dims = json::object();
  for (auto d : rep.dimensions)
    dims[std::string(to_string(d))] = {{"proportion_yes", round_to(rep.proportion.at(d), 4)},
                                       {"n", rep.n.at(d)}};
  return json{{"schema", std::string(kFidelityReportSchema)},
              {"dimensions", dims},
              {"average", round_to(rep.average, 4)},
              {"metadata", rep.metadata}};
}

/// One section per benchmark; rows are generation models.
inline std::string fidelity_reports_to_markdown(
    const std::vector<std::pair<std::string, std::vector<std::pair<std::string, FidelityReport>>>>& benchmarks)
{
  std::ostringstream md;
  bool first = true;
  for (const auto& [bench, rows] : benchmarks) {
    if (!first)
      md << '\n';
    first = false;
    md << "## " << bench << "\n\n";
    md << "| Models | Structure | Semantic | Low-level | Avg. |\n";
    md << "|---|---|---|---|---|\n";
    for (const auto& [model, rep] : rows) {
      md << "| " << model;
      for (auto d : kAllDimensions) {
        auto it = rep.proportion.find(d);
        md << " | " << (it == rep.proportion.end() ? std::string("-") : fixed(it->second, 4));
      }
      md << " | " << fixed(rep.average, 4) << " |\n";
    }
  }
  return md.str();
}

inline std::string fidelity_report_to_markdown(const FidelityReport& rep)
{
  return fidelity_reports_to_markdown(
      {{rep.metadata.value("benchmark", std::string("benchmark")),
        {{rep.metadata.value("generation_model", std::string("model")), rep}}}});
}

inline std::string fidelity_report_to_csv(const FidelityReport& rep)
{
  std::ostringstream csv;
  csv << "metric,structure,semantic,low_level,avg\n";
  csv << "proportion_yes";
  for (auto d : kAllDimensions) {
    auto it = rep.proportion.find(d);
    csv << ',' << (it == rep.proportion.end() ? std::string() : fixed(it->second, 4));
  }
  csv << ',' << fixed(rep.average, 4) << '\n';
  csv << "n";
  for (auto d : kAllDimensions) {
    auto it = rep.n.find(d);
    csv << ',' << (it == rep.n.end() ? std::string() : std::to_string(it->second));
  }
  csv << ",\n";
  return csv.str();
}

// ---------------------------------------------------------------------------
// Multiple-choice evaluation

struct McRecord
{
  std::string question_id;
  Dimension dimension = Dimension::structure;
  QuestionKind kind = QuestionKind::type;
  LetterSet gt;
  std::optional<LetterSet> pred;
  std::optional<ParseFailure> parse_failure;
  std::optional<std::string> request_failure;
  RewardScore reward;
  std::string raw_ref;
};

struct McReport
{
  std::map<Dimension, std::size_t> n;
  std::map<Dimension, double> exact_acc;    // percent of exact letter-set matches
  std::map<Dimension, double> mean_reward;  // mean R_MC
  std::size_t parse_failures = 0;
  std::size_t request_failures = 0;
  json metadata = json::object();
};

inline McReport build_mc_report(std::span<const McRecord> records)
{
  McReport rep;
  std::map<Dimension, std::size_t> exact;
  std::map<Dimension, double> reward_sum;
  for (const auto& r : records) {
    ++rep.n[r.dimension];
    if (r.pred && *r.pred == r.gt)
      ++exact[r.dimension];
    reward_sum[r.dimension] += r.reward.value;
    if (r.parse_failure)
      ++rep.parse_failures;
    if (r.request_failure)
      ++rep.request_failures;
  }
  for (const auto& [d, n] : rep.n) {
    rep.exact_acc[d] = percent(exact[d], n);
    rep.mean_reward[d] = reward_sum[d] / static_cast<double>(n);
  }
  return rep;
}

inline json mc_record_to_json(const McRecord& r)
{
  json j{{"id", r.question_id},
         {"dimension", std::string(to_string(r.dimension))},
         {"kind", std::string(to_string(r.kind))},
         {"gt", r.gt.letters()},
         {"reward", r.reward.value},
         {"gate", std::string(to_string(r.reward.gate))},
         {"raw_ref", r.raw_ref}};
  if (r.pred)
    j["pred"] = r.pred->letters();
  if (r.parse_failure)
    j["parse_failure"] = failure_to_json(*r.parse_failure);
  if (r.request_failure)
    j["request_failure"] = *r.request_failure;
  return j;
}

inline json mc_report_to_json(const McReport& rep)
{
  json dims = json::object();
  for (const auto& [d, n] : rep.n)
    dims[std::string(to_string(d))] = {{"n", n},
                                       {"exact_acc", round_to(rep.exact_acc.at(d), 2)},
                                       {"mean_reward", round_to(rep.mean_reward.at(d), 4)}};
  return json{{"schema", std::string(kMcReportSchema)},
              {"dimensions", dims},
              {"parse_failures", rep.parse_failures},
              {"request_failures", rep.request_failures},
              {"metadata", rep.metadata}};
}

inline std::string mc_report_to_markdown(const McReport& rep)
{
  std::ostringstream md;
  md << "| Dimension | n | Exact Accuracy | Mean Reward |\n|---|---|---|---|\n";
  for (const auto& [d, n] : rep.n)
    md << "| " << display_name(d) << " | " << n << " | " << fixed(rep.exact_acc.at(d), 2) << " | "
       << fixed(rep.mean_reward.at(d), 4) << " |\n";
  return md.str();
}

inline std::string mc_report_to_csv(const McReport& rep)
{
  std::ostringstream csv;
  csv << "dimension,n,exact_acc,mean_reward\n";
  for (const auto& [d, n] : rep.n)
    csv << to_string(d) << ',' << n << ',' << fixed(rep.exact_acc.at(d), 2) << ','
        << fixed(rep.mean_reward.at(d), 4) << '\n';
  return csv.str();
}

}  // namespace stablei2i
