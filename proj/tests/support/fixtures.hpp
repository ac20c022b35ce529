#pragma once

// Synthetic record fixtures built to prescribed outcome counts. The counts are
// inputs; nothing here computes accuracy, so the metric code under test and
// the recount oracle both work from the same raw rows.

#include "stablei2i/stablei2i.hpp"

#include "../oracles/recount_oracle.hpp"

namespace fixtures {

using namespace stablei2i;

/// Target outcome counts for one dimension of a judge benchmark.
struct DimensionCounts
{
  Dimension dimension;
  std::size_t n;
  std::size_t binary;  // answer matches
  std::size_t strict;  // answer and problem set match (subset of binary)
};

/// The published per-dimension outcome counts of the specialised judge, 1000 samples each.
inline std::vector<DimensionCounts> judge_counts()
{
  return {{Dimension::structure, 1000, 854, 837},
          {Dimension::semantic, 1000, 828, 673},
          {Dimension::low_level, 1000, 991, 980}};
}

struct FixtureRow
{
  BenchSample sample;
  std::string raw;  // model response text
};

namespace detail_ {

inline ProblemSet bits(Dimension d, std::uint32_t b) { return ProblemSet(d, b); }

// A different non-empty problem set of the same dimension.
inline ProblemSet other_nonempty(const ProblemSet& p)
{
  const std::uint32_t full = (1u << vocabulary(p.dimension()).size()) - 1u;
  return ProblemSet(p.dimension(), (p.bits() % full) + 1u);
}

}  // namespace detail_

/// Rows for one dimension. The first half carries a No ground truth, the second
/// half Yes (low-level alternates Yes and NULL). Outcome classes by index:
/// [0, binary-strict) answer right but wrong types, [binary-strict, binary) exact,
/// [binary, n) wrong; every fifth wrong row is an unparseable response.
inline std::vector<FixtureRow> judge_rows(const DimensionCounts& c, const std::filesystem::path& in,
                                          const std::filesystem::path& out)
{
  using namespace detail_;
  const auto d = c.dimension;
  const std::uint32_t full = (1u << vocabulary(d).size()) - 1u;
  const std::size_t loose = c.binary - c.strict;
  if (loose > c.n / 2 || c.binary > c.n || c.strict > c.binary)
    throw Error("fixture counts are not realisable");
  std::vector<FixtureRow> rows;
  for (std::size_t i = 0; i < c.n; ++i) {
    Verdict gt = Verdict::yes(d);
    if (i < c.n / 2)
      gt = Verdict::no(bits(d, static_cast<std::uint32_t>(i % full) + 1u));
    else if (d == Dimension::low_level && i % 2)
      gt = Verdict::ignored();

    std::string raw;
    if (i < loose) {
      raw = format_verdict(Verdict::no(other_nonempty(gt.problems())));
    } else if (i < c.binary) {
      raw = "Assessment: " + format_verdict(gt);
    } else if ((i - c.binary) % 5 == 4) {
      raw = "I am unable to judge these images.";
    } else if (gt.answer() == Answer::no) {
      raw = format_verdict(Verdict::yes(d));
    } else {
      raw = "```json\n" + format_verdict(Verdict::no(bits(d, 1))) + "\n```";
    }
    char id[64];
    std::snprintf(id, sizeof id, "%s_%04zu", std::string(to_string(d)).c_str(), i);
    rows.push_back({BenchSample{id, in, out, "fixture instruction " + std::string(id), d, gt}, raw});
  }
  return rows;
}

inline std::vector<FixtureRow> judge_fixture(const std::filesystem::path& in, const std::filesystem::path& out)
{
  std::vector<FixtureRow> all;
  for (const auto& c : judge_counts()) {
    auto rows = judge_rows(c, in, out);
    all.insert(all.end(), rows.begin(), rows.end());
  }
  return all;
}

/// Independent recount input for the oracle.
inline std::vector<oracle::Row> oracle_rows(const std::vector<FixtureRow>& rows)
{
  auto to_v = [](const Verdict& v) {
    oracle::V o{std::string(to_string(v.answer())), {}};
    for (const auto& t : v.problems().tokens())
      o.problems.insert(t);
    return o;
  };
  std::vector<oracle::Row> out;
  for (const auto& r : rows) {
    oracle::Row o{std::string(to_string(r.sample.dimension)), to_v(r.sample.gt), std::nullopt};
    // Oracle-side reading of the response: the JSON object after any prose or fence.
    auto open = r.raw.find('{');
    if (open != std::string::npos) {
      auto close = r.raw.rfind('}');
      auto j = json::parse(r.raw.substr(open, close - open + 1));
      oracle::V v{j["answer"].get<std::string>(), {}};
      if (j["problem"].is_array())
        for (const auto& t : j["problem"])
          v.problems.insert(t.get<std::string>());
      o.pred = v;
    }
    out.push_back(std::move(o));
  }
  return out;
}

/// Stores every row's response in the cache under the key the replay client will compute.
inline void seed_cache(const ResponseCache& cache, const std::string& model, const TemplateStore& store,
                       const std::vector<FixtureRow>& rows)
{
  for (const auto& r : rows) {
    auto prompt = render_bench_prompt(store, r.sample);
    cache.put(model, cache_key(model, prompt), r.raw, json{{"fixture", true}});
  }
}

/// Verdict records for a fidelity run: per dimension, `yes` of `n` records answer Yes.
inline std::vector<EvalRecord> fidelity_records(std::size_t n, const std::map<Dimension, std::size_t>& yes)
{
  std::vector<EvalRecord> out;
  for (auto d : kAllDimensions)
    for (std::size_t i = 0; i < n; ++i) {
      EvalRecord r;
      r.sample_id = "pair_" + std::to_string(i);
      r.dimension = d;
      if (i < yes.at(d))
        r.pred = Verdict::yes(d);
      else if (d == Dimension::low_level && i % 2)
        r.pred = Verdict::ignored();
      else
        r.pred = Verdict::no(ProblemSet(d, 1));
      out.push_back(std::move(r));
    }
  return out;
}

/// The published fidelity row of one editing model: 568 pairs with 552 / 497 / 457 Yes.
inline std::vector<EvalRecord> editing_model_fidelity_records()
{
  return fidelity_records(568, {{Dimension::semantic, 552}, {Dimension::structure, 497}, {Dimension::low_level, 457}});
}

/// `n` preference pairs of which exactly `agree` match the human choice.
inline std::vector<PreferencePair> preference_pairs(std::size_t n, std::size_t agree)
{
  auto candidate = [](const std::string& id, std::size_t yes_dims) {
    std::vector<EvalRecord> rs;
    for (auto d : kAllDimensions) {
      EvalRecord r;
      r.sample_id = id;
      r.dimension = d;
      r.pred = index_of(d) < yes_dims ? Verdict::yes(d) : Verdict::no(ProblemSet(d, 1));
      rs.push_back(std::move(r));
    }
    return rs;
  };
  std::vector<PreferencePair> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto id = "pref_" + std::to_string(i);
    // Cycle through A-preferred, B-preferred and tied candidates.
    PreferencePair p;
    Preference model = Preference::tie;
    switch (i % 3) {
      case 0: p.a = candidate(id + "a", 3); p.b = candidate(id + "b", 1); model = Preference::a; break;
      case 1: p.a = candidate(id + "a", 0); p.b = candidate(id + "b", 2); model = Preference::b; break;
      default: p.a = candidate(id + "a", 2); p.b = candidate(id + "b", 2); model = Preference::tie; break;
    }
    if (i < agree)
      p.human = model;
    else
      p.human = model == Preference::a ? Preference::b : Preference::a;
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace fixtures
