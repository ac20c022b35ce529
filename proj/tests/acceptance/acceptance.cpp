// Acceptance suite: one PASS/FAIL line per criterion. Exit status is non-zero if any fails.

#include "stablei2i/stablei2i.hpp"

#include "fixtures.hpp"
#include "fuzz.hpp"
#include "hand_scored.hpp"
#include "recount_oracle.hpp"
#include "reward_oracle.hpp"

#include <httplib.h>

#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

using namespace stablei2i;
namespace fs = std::filesystem;

namespace {

// Tolerances.
constexpr double kReplayTolerance = 0.01;      // two-decimal rounding of the averages
constexpr double kReplaySeconds = 5.0;
constexpr double kExhaustiveSeconds = 1.0;
constexpr int kFuzzIterations = 100000;
constexpr int kMetricFixtures = 1000;
constexpr int kSynthImages = 100;
constexpr int kConcurrentRequests = 1000;

struct Outcome
{
  bool pass = true;
  std::string first_failure;
  std::ostringstream detail;

  void require(bool ok, const std::string& what)
  {
    if (!ok && pass) {
      pass = false;
      first_failure = what;
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t)
{
  return std::chrono::duration<double>(Clock::now() - t).count();
}

class ScratchDir
{
public:
  explicit ScratchDir(const std::string& tag)
      : path_(fs::temp_directory_path() / ("stablei2i_accept_" + tag + "_" + std::to_string(::getpid())))
  {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~ScratchDir()
  {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

private:
  fs::path path_;
};

std::vector<Verdict> all_verdicts(Dimension d)
{
  std::vector<Verdict> out{Verdict::yes(d)};
  if (d == Dimension::low_level)
    out.push_back(Verdict::ignored());
  const auto n = vocabulary(d).size();
  for (std::uint32_t bits = 1; bits < (1u << n); ++bits)
    out.push_back(Verdict::no(ProblemSet(d, bits)));
  return out;
}

oracle::V to_v(const Verdict& v)
{
  oracle::V o{std::string(to_string(v.answer())), {}};
  for (const auto& t : v.problems().tokens())
    o.problems.insert(std::string(t));
  return o;
}

std::set<char> to_chars(std::uint32_t bits)
{
  std::set<char> s;
  for (int i = 0; i < 26; ++i)
    if ((bits >> i) & 1u)
      s.insert(static_cast<char>('A' + i));
  return s;
}

LetterSet to_letters(std::uint32_t bits)
{
  LetterSet s;
  for (std::size_t i = 0; i < 26; ++i)
    if ((bits >> i) & 1u)
      s.insert_index(i);
  return s;
}

RewardConfig config(double alpha, double m = 1.0)
{
  RewardConfig c;
  c.alpha = alpha;
  c.max_mc = m;
  return c;
}

// ---------------------------------------------------------------------------

void reward_exhaustive(Outcome& o)
{
  const auto start = Clock::now();
  std::size_t cases = 0;
  for (double alpha : {0.0, 0.5, 1.0})
    for (auto d : kAllDimensions) {
      const auto vs = all_verdicts(d);
      for (const auto& gt : vs)
        for (const auto& pred : vs) {
          ++cases;
          const double got = reward_binary(gt, pred, config(alpha)).value;
          const double want = oracle::binary_reward(to_v(gt), to_v(pred), alpha);
          o.require(got == want, "binary mismatch at " + format_verdict(gt) + " vs " + format_verdict(pred));
        }
    }
  for (double m : {1.0, 2.0})
    for (std::uint32_t g = 1; g < 32; ++g)
      for (std::uint32_t p = 0; p < 32; ++p) {
        ++cases;
        const double got = reward_mc(to_letters(g), to_letters(p), config(0.5, m)).value;
        o.require(got == oracle::mc_reward(to_chars(g), to_chars(p), m), "mc mismatch");
      }
  const double t = seconds_since(start);
  o.require(t < kExhaustiveSeconds, "took too long");
  o.detail << cases << " cases, 0 tolerance, " << t << " s";
}

void reward_edge_gates(Outcome& o)
{
  const auto S = Dimension::semantic;
  auto v = [&](std::initializer_list<std::string> t) { return Verdict::no(canonicalize_problem_types(S, t)); };
  const auto cfg = config(0.5);
  auto exact = [&](RewardScore got, double value, Gate gate, const std::string& what) {
    o.require(got.value == value && got.gate == gate, what);
  };
  exact(reward_binary(v({"replace"}), Verdict::yes(S), cfg), 0.0, Gate::answer_mismatch, "answer mismatch");
  // A verdict cannot hold Yes with problems or No without them, so these only arrive as raw text.
  exact(score_binary_response(Verdict::yes(S), R"({"answer":"Yes","problem":["add"]})", cfg).score, 0.0,
        Gate::format_failed, "Yes with problems");
  exact(score_binary_response(v({"add"}), R"({"answer":"No","problem":"NULL"})", cfg).score, 0.0,
        Gate::format_failed, "No without problems");
  exact(reward_mc(LetterSet::of("AC"), LetterSet::of("AB"), cfg), 0.0, Gate::answer_mismatch, "G^ not in G");
  exact(reward_mc(LetterSet::of("A"), LetterSet{}, cfg), 0.0, Gate::passed, "empty G^");
  // Worked examples.
  exact(reward_mc(LetterSet::of("C"), LetterSet::of("C"), cfg), 1.0, Gate::passed, "mc full match");
  exact(reward_mc(LetterSet::of("AC"), LetterSet::of("A"), config(0.5, 2.0)), 1.0, Gate::passed, "mc half, M=2");
  exact(reward_binary(v({"add", "remove"}), v({"add"}), cfg), 0.5, Gate::passed, "binary half");
  exact(reward_binary(Verdict::yes(S), Verdict::yes(S), cfg), 1.0, Gate::passed, "binary yes");
  exact(reward_binary(v({"replace"}), v({"replace", "add"}), config(1.0)), 0.0, Gate::passed, "binary clamp");
  exact(score_binary_response(v({"add"}), "not json", cfg).score, 0.0, Gate::format_failed, "format gate");
  exact(score_mc_response(LetterSet::of("A"), R"({"answer":[]})", 4, cfg).score, 0.0, Gate::format_failed,
        "empty answer list");
  o.detail << "12 exact cases";
}

void metric_identities(Outcome& o)
{
  std::mt19937_64 rng(20250101);
  std::size_t records_seen = 0, reward_checks = 0;
  for (int trial = 0; trial < kMetricFixtures; ++trial) {
    std::vector<fixtures::FixtureRow> rows;
    const std::size_t n = 3 + rng() % 60;
    for (std::size_t i = 0; i < n; ++i) {
      const auto d = kAllDimensions[i % 3];
      const auto vs = all_verdicts(d);
      const auto gt = vs[rng() % vs.size()];
      const auto roll = rng() % 10;
      std::string raw = roll == 0 ? "unparseable" : format_verdict(roll < 4 ? gt : vs[rng() % vs.size()]);
      rows.push_back({BenchSample{"r" + std::to_string(i), "", "", std::nullopt, d, gt}, raw});
    }
    std::vector<EvalRecord> records;
    for (const auto& r : rows)
      records.push_back(EvalRecord::from_outcome(r.sample.id, r.sample.dimension, r.sample.gt,
                                                 parse_verdict_text(r.raw, r.sample.dimension)));
    records_seen += records.size();
    const auto b = binary_accuracy(records), s = strict_accuracy(records);
    const auto want = oracle::recount(fixtures::oracle_rows(rows));
    for (auto d : kAllDimensions) {
      const std::string key(to_string(d));
      o.require(b.per_dimension.at(d) >= s.per_dimension.at(d), "binary < strict");
      o.require(b.per_dimension.at(d) == want.binary.at(key), "binary recount differs");
      o.require(s.per_dimension.at(d) == want.strict.at(key), "strict recount differs");
    }
    o.require(std::abs(b.average - want.binary_avg) < 1e-9 && std::abs(s.average - want.strict_avg) < 1e-9,
              "average recount differs");
    for (const auto& r : records) {
      if (!r.pred)
        continue;
      for (double alpha : {0.25, 0.5, 1.0}) {
        ++reward_checks;
        const bool strict = r.matches(MatchMode::strict);
        const bool full = reward_binary(*r.gt, *r.pred, config(alpha)).value == 1.0;
        o.require(strict == full, "strict match and reward 1 disagree");
      }
    }
  }
  o.detail << kMetricFixtures << " fixtures, " << records_seen << " records, " << reward_checks
           << " reward checks";
}

void judge_table_replay(Outcome& o)
{
  ScratchDir dir("replay");
  write_png(dir.path() / "in.png", Image(4, 4));
  Image out(4, 4);
  out.pixels.assign(out.pixels.size(), 200);
  write_png(dir.path() / "out.png", out);
  auto store = TemplateStore::load();
  const auto rows = fixtures::judge_fixture(dir.path() / "in.png", dir.path() / "out.png");
  std::vector<BenchSample> samples;
  for (const auto& r : rows)
    samples.push_back(r.sample);
  fixtures::seed_cache(ResponseCache(dir.path() / "cache"), "judge", store, rows);

  const auto start = Clock::now();
  ReplayClient client("judge", std::make_shared<ResponseCache>(dir.path() / "cache"));
  auto run = run_benchmark(samples, client, store, {.workers = 4});
  const double t = seconds_since(start);
  const double b = run.report.binary.average, s = run.report.strict.average;
  o.require(samples.size() == 3000, "fixture size");
  o.require(std::abs(b - 89.10) <= kReplayTolerance, "binary average off");
  o.require(std::abs(s - 83.00) <= kReplayTolerance, "strict average off");
  o.require(t < kReplaySeconds, "too slow");
  o.detail << samples.size() << " records, binary " << fixed(b, 2) << ", strict " << fixed(s, 2) << " (tol "
           << kReplayTolerance << "), " << fixed(t, 2) << " s";
}

void preference_replay(Outcome& o)
{
  const double imgedit = preference_agreement(fixtures::preference_pairs(50, 40));
  const double gedit = preference_agreement(fixtures::preference_pairs(50, 38));
  o.require(imgedit == 80.0, "ImgEdit agreement");
  o.require(gedit == 76.0, "GEdit agreement");
  o.detail << "ImgEdit " << imgedit << "%, GEdit " << gedit << "% over 50 pairs each";
}

void parser_round_trip(Outcome& o)
{
  std::size_t verdicts = 0;
  for (auto d : kAllDimensions)
    for (const auto& v : all_verdicts(d)) {
      ++verdicts;
      auto back = parse_verdict_text(format_verdict(v), d);
      o.require(back && *back == v, "round trip failed for " + format_verdict(v));
    }
  std::mt19937_64 rng(20240611);
  std::size_t unclassified = 0;
  for (int i = 0; i < kFuzzIterations; ++i) {
    const auto input = fuzz::input(i, rng);
    const auto d = kAllDimensions[rng() % 3];
    try {
      auto check = [&](const auto& outcome) {
        if (!outcome && (!failure_reason_from_string(to_string(outcome.failure().reason)) ||
                         outcome.failure().excerpt.size() > kMaxExcerpt))
          ++unclassified;
      };
      check(parse_verdict_text(input, d));
      check(parse_mc_answer_text(input, 4));
      if (d != Dimension::structure)
        check(parse_open_ended_text(input, d));
    } catch (...) {
      ++unclassified;
    }
  }
  o.require(unclassified == 0, std::to_string(unclassified) + " unclassified failures");
  o.detail << verdicts << " verdicts round-tripped, " << kFuzzIterations << " fuzz inputs, " << unclassified
           << " unclassified";
}

void synthesis_determinism(Outcome& o)
{
  const fs::path fixtures_dir = STABLEI2I_FIXTURE_DIR;
  const auto reference = read_image(fixtures_dir / "reference.png");
  const auto ceilings = json::parse(read_binary_file(fixtures_dir / "psnr_ceilings.json"))["ceiling_db"];

  TextureCropSource crops;
  DegradationSource degrade({kAllDegradationKinds.begin(), kAllDegradationKinds.end()});
  constexpr std::uint64_t kSeed = 424242;
  double min_ratio = 1.0, max_ratio = 0.0;
  for (int i = 0; i < kSynthImages; ++i) {
    // Distinct images: shifted crops of the reference at varying sizes.
    const std::size_t w = 64 + static_cast<std::size_t>(i) % 97, h = 48 + static_cast<std::size_t>(i * 7) % 89;
    const auto img = crop(reference, static_cast<std::size_t>(i) % 50, static_cast<std::size_t>(i) % 40, w, h);
    const auto seed = detail::derive_seed(kSeed, static_cast<std::uint64_t>(i));
    for (const PairSource* src : {static_cast<const PairSource*>(&crops), static_cast<const PairSource*>(&degrade)}) {
      const auto a = src->generate(img, seed);
      const auto b = src->generate(img, seed);
      const auto r = regenerate_pair(img, json::parse(a.provenance.dump()));
      o.require(a.image_a == b.image_a && a.image_b == b.image_b && a.provenance == b.provenance,
                src->name() + " not deterministic");
      o.require(r.image_a == a.image_a && r.image_b == a.image_b && r.labels == a.labels,
                src->name() + " regeneration differs");
      if (src == &crops) {
        const double ratio = a.provenance["ratio"].get<double>();
        min_ratio = std::min(min_ratio, ratio);
        max_ratio = std::max(max_ratio, ratio);
        o.require(ratio >= 0.95 && ratio <= 0.98, "crop ratio out of range");
      }
    }
    o.require(apply_degradation(img, {}, seed).image_b == img, "identity chain changed pixels");
  }

  // Single-operator chains on the reference image against the derived ceilings.
  DegradationRanges ranges;
  detail::Rng rng(kSeed);
  double worst_margin = 1e9;
  for (auto kind : kAllDegradationKinds) {
    const double ceiling = ceilings.at(std::string(to_string(kind))).get<double>();
    for (int k = 0; k < 8; ++k) {
      const auto op = sample_op(kind, ranges, rng);
      const double p = psnr(reference, apply_degradation(reference, {op}, rng.next()).image_b);
      worst_margin = std::min(worst_margin, ceiling - p);
      o.require(p < ceiling, std::string(to_string(kind)) + " PSNR " + fixed(p, 2) + " above ceiling");
    }
  }
  o.detail << kSynthImages << " images x 2 sources, ratios in [" << fixed(min_ratio, 4) << ", " << fixed(max_ratio, 4)
           << "], min PSNR headroom " << fixed(worst_margin, 2) << " dB";
}

void resize_cap_check(Outcome& o)
{
  const auto big = resize_cap(Image(2688, 1344));
  o.require(big.width == 1344 && big.height == 672, "2688x1344 did not map to 1344x672");
  std::mt19937_64 rng(99);
  std::size_t resized = 0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t w = 1 + rng() % 2600, h = 1 + rng() % 2600;
    Image img(w, h);
    for (std::size_t k = 0; k < img.pixels.size(); k += 97)
      img.pixels[k] = static_cast<std::uint8_t>(k);
    const auto once = resize_cap(img);
    const auto twice = resize_cap(once);
    resized += (once.width != w || once.height != h);
    o.require(std::max(once.width, once.height) <= kMaxSide, "cap exceeded");
    o.require(twice == once, "not idempotent at " + std::to_string(w) + "x" + std::to_string(h));
  }
  o.detail << "2688x1344 -> " << big.width << "x" << big.height << ", 100 random sizes idempotent (" << resized
           << " downscaled)";
}

int run_cli(const std::vector<std::string>& args)
{
  std::string cmd = STABLEI2I_CLI_PATH;
  for (const auto& a : args)
    cmd += " '" + a + "'";
  cmd += " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void end_to_end(Outcome& o)
{
  ScratchDir dir("e2e");
  const auto store = TemplateStore::load();
  hand_scored::materialize(dir.path(), dir.path() / "cache", "judge", store);
  for (const char* w : {"1", "8"}) {
    const int code = run_cli({"--replay-only", "--workers", w, "--out", (dir.path() / ("out" + std::string(w))).string(),
                              "eval", "--bench", (dir.path() / "bench.jsonl").string(), "--model", "judge", "--cache",
                              (dir.path() / "cache").string()});
    o.require(code == 0, "eval exited with " + std::to_string(code));
  }
  for (const char* f : {"records.jsonl", "report.json", "report.md", "report.csv"})
    o.require(read_binary_file(dir.path() / "out1" / f) == read_binary_file(dir.path() / "out8" / f),
              std::string(f) + " differs between worker counts");

  const auto rep = json::parse(read_binary_file(dir.path() / "out1" / "report.json"));
  const json want{{"structure", {50.0, 50.0}}, {"semantic", {50.0, 0.0}}, {"low_level", {100.0, 100.0}}};
  for (auto it = want.begin(); it != want.end(); ++it) {
    const auto& got = rep["dimensions"][it.key()];
    o.require(got["binary_acc"] == it.value()[0] && got["strict_acc"] == it.value()[1], it.key() + " accuracy");
  }
  o.require(rep["average"]["binary_acc"] == 66.67 && rep["average"]["strict_acc"] == 50.0, "averages");
  o.require(rep["dimensions"]["semantic"]["parse_failures"]["no_object"] == 1, "no_object count");
  o.detail << "binary avg " << rep["average"]["binary_acc"] << ", strict avg " << rep["average"]["strict_acc"]
           << ", workers 1 vs 8 byte-identical";
}

void reward_service(Outcome& o)
{
  RewardServer server(RewardConfig{});
  const int port = server.bind("127.0.0.1", 0);
  std::thread th([&] { server.serve(); });
  server.wait_until_ready();

  auto binary = [](const std::string& dim, const std::string& answer, json problem, const std::string& raw,
                   json cfg = nullptr) {
    json r{{"task", "binary"}, {"dimension", dim}, {"gt", {{"answer", answer}, {"problem", problem}}},
           {"pred_raw_text", raw}};
    if (!cfg.is_null())
      r["config"] = cfg;
    return r;
  };
  auto mc = [](json gt, const std::string& raw, json cfg = nullptr) {
    json r{{"task", "mc"}, {"gt", gt}, {"pred_raw_text", raw}};
    if (!cfg.is_null())
      r["config"] = cfg;
    return r;
  };
  // Scripted session: worked reward examples plus the format gate.
  const std::vector<std::tuple<json, double, std::string>> script{
      {mc({"C"}, R"({"answer":["C"]})"), 1.0, "passed"},
      {mc({"A", "C"}, R"({"answer":["A"]})", {{"M", 2}}), 1.0, "passed"},
      {mc({"A", "C"}, R"({"answer":["A","B"]})"), 0.0, "answer_mismatch"},
      {mc({"A"}, R"({"answer":[]})"), 0.0, "format_failed"},
      {binary("semantic", "No", {"add", "remove"}, R"({"answer":"No","problem":["add"]})"), 0.5, "passed"},
      {binary("semantic", "Yes", "NULL", R"({"answer":"Yes","problem":"NULL"})"), 1.0, "passed"},
      {binary("semantic", "No", {"replace"}, R"({"answer":"No","problem":["replace","add"]})", {{"alpha", 1}}), 0.0,
       "passed"},
      {binary("semantic", "No", {"replace"}, R"({"answer":"Yes","problem":"NULL"})"), 0.0, "answer_mismatch"},
      {binary("structure", "No", {"misalignment"}, "I cannot tell."), 0.0, "format_failed"},
      {mc({"B"}, "B is my answer"), 0.0, "format_failed"},
  };
  httplib::Client cli("127.0.0.1", port);
  for (const auto& [req, value, gate] : script) {
    auto res = cli.Post("/reward", req.dump(), "application/json");
    if (!res) {
      o.require(false, "request failed");
      continue;
    }
    const auto body = json::parse(res->body);
    o.require(body["reward"].get<double>() == value && body["gate"] == gate, "scripted mismatch: " + req.dump());
  }

  // Concurrent load: every request carries its own M so responses are distinguishable.
  std::atomic<int> good{0}, bad{0};
  std::vector<std::thread> clients;
  constexpr int kThreads = 20;
  for (int t = 0; t < kThreads; ++t)
    clients.emplace_back([&, t] {
      httplib::Client c("127.0.0.1", port);
      for (int k = t; k < kConcurrentRequests; k += kThreads) {
        const double m = 1.0 + k;
        auto res = c.Post("/reward", mc({"A", "B"}, R"({"answer":["B"]})", {{"M", m}}).dump(), "application/json");
        if (res && res->status == 200 && json::parse(res->body)["reward"].get<double>() == m / 2)
          ++good;
        else
          ++bad;
      }
    });
  for (auto& c : clients)
    c.join();
  server.stop();
  th.join();
  o.require(good == kConcurrentRequests && bad == 0, std::to_string(bad.load()) + " dropped or corrupted");
  o.detail << script.size() << " scripted requests exact, " << good.load() << "/" << kConcurrentRequests
           << " concurrent responses correct";
}

}  // namespace

int main()
{
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"reward-exhaustive-oracle", reward_exhaustive},
      {"reward-edge-gates", reward_edge_gates},
      {"metric-identities", metric_identities},
      {"judge-benchmark-replay", judge_table_replay},
      {"preference-agreement-replay", preference_replay},
      {"parser-round-trip", parser_round_trip},
      {"synthesis-determinism", synthesis_determinism},
      {"resize-cap", resize_cap_check},
      {"end-to-end-offline", end_to_end},
      {"reward-service", reward_service},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      fn(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail.str();
    if (!o.pass)
      std::cout << " | first failure: " << o.first_failure;
    std::cout << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
