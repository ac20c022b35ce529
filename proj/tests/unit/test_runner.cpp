#include "helpers.hpp"
#include "hand_scored.hpp"

#include <httplib.h>

using namespace testutil;

namespace {

class RunnerTest : public ::testing::Test
{
protected:
  void SetUp() override { samples = hand_scored::materialize(dir.path(), dir / "cache", "judge", store); }

  TempDir dir;
  TemplateStore store = TemplateStore::load();
  std::shared_ptr<ResponseCache> cache = std::make_shared<ResponseCache>(dir / "cache");
  std::vector<BenchSample> samples;
};

/// Answers from a fixed function of the rendered prompt.
class ScriptedClient : public ModelClient
{
public:
  explicit ScriptedClient(std::function<std::string(const RenderedPrompt&)> fn) : fn_(std::move(fn)) {}
  std::string model_id() const override { return "scripted"; }
  RawResponse complete(const RenderedPrompt& p) override
  {
    RawResponse r;
    r.text = fn_(p);
    r.key = p.fingerprint;
    return r;
  }

private:
  std::function<std::string(const RenderedPrompt&)> fn_;
};

}  // namespace

TEST_F(RunnerTest, HandScoredReplayRun)
{
  ReplayClient client("judge", cache);
  auto run = run_benchmark(samples, client, store);
  const auto& rep = run.report;
  EXPECT_DOUBLE_EQ(rep.binary.per_dimension.at(Dimension::structure), 50.0);
  EXPECT_DOUBLE_EQ(rep.strict.per_dimension.at(Dimension::structure), 50.0);
  EXPECT_DOUBLE_EQ(rep.binary.per_dimension.at(Dimension::semantic), 50.0);
  EXPECT_DOUBLE_EQ(rep.strict.per_dimension.at(Dimension::semantic), 0.0);
  EXPECT_DOUBLE_EQ(rep.binary.per_dimension.at(Dimension::low_level), 100.0);
  EXPECT_DOUBLE_EQ(rep.strict.per_dimension.at(Dimension::low_level), 100.0);
  EXPECT_EQ(fixed(rep.binary.average, 2), "66.67");
  EXPECT_EQ(fixed(rep.strict.average, 2), "50.00");

  const auto& sem = rep.tallies[index_of(Dimension::semantic)];
  EXPECT_EQ(sem.parse_failures[static_cast<std::size_t>(FailureReason::no_object)], 1u);
  ASSERT_EQ(run.records.size(), 6u);
  EXPECT_EQ(run.records[0].sample_id, "s1");
  EXPECT_EQ(run.records[0].template_id, render_bench_prompt(store, samples[0]).template_id);
  EXPECT_EQ(rep.metadata["model"], "judge");
  EXPECT_EQ(rep.metadata["image_order"], "images_then_text");

  ASSERT_EQ(run.warnings.size(), 1u);
  EXPECT_NE(run.warnings[0].find("low_level"), std::string::npos);
}

TEST_F(RunnerTest, WorkerCountDoesNotChangeOutput)
{
  ReplayClient client("judge", cache);
  auto one = run_benchmark(samples, client, store, {.workers = 1});
  auto many = run_benchmark(samples, client, store, {.workers = 8});
  write_records(dir / "a.jsonl", one.records);
  write_records(dir / "b.jsonl", many.records);
  emit_all_formats(one.report, dir.path(), "a");
  emit_all_formats(many.report, dir.path(), "b");
  for (auto ext : {".jsonl", ".json", ".md", ".csv"})
    EXPECT_EQ(read_file(dir / (std::string("a") + ext)), read_file(dir / (std::string("b") + ext))) << ext;
}

TEST_F(RunnerTest, ReplayMissAbortsNamingSample)
{
  auto extra = samples[0];
  extra.id = "uncached";
  extra.task_prompt = "something new";
  samples.push_back(extra);
  ReplayClient client("judge", cache);
  try {
    run_benchmark(samples, client, store, {.workers = 4});
    FAIL() << "expected ReplayMiss";
  } catch (const ReplayMiss& e) {
    EXPECT_NE(std::string(e.what()).find("uncached"), std::string::npos);
  }
}

TEST_F(RunnerTest, RequestFailuresAreRecordedAndScoredIncorrect)
{
  ScriptedClient client([](const RenderedPrompt& p) -> std::string {
    if (p.text.find("instruction for s1") != std::string::npos)
      throw Timeout("slow endpoint");
    return "{\"answer\": \"Yes\", \"problem\": \"NULL\"}";
  });
  auto run = run_benchmark(samples, client, store, {.workers = 3});
  ASSERT_TRUE(run.records[0].request_failure);
  EXPECT_EQ(run.records[0].request_failure->rfind("timeout:", 0), 0u);
  EXPECT_EQ(run.report.tallies[index_of(Dimension::structure)].request_failures, 1u);
  // s2 is the only structure sample answered correctly.
  EXPECT_DOUBLE_EQ(run.report.binary.per_dimension.at(Dimension::structure), 50.0);
}

TEST_F(RunnerTest, FidelityScoringUsesThreeQueriesPerPair)
{
  std::vector<PairSample> pairs;
  for (const auto& s : samples)
    pairs.push_back(PairSample{s.id, s.input_image, s.output_image, s.task_prompt});
  std::atomic<int> calls{0};
  ScriptedClient client([&](const RenderedPrompt& p) -> std::string {
    ++calls;
    if (p.template_id.find("low_level") != std::string::npos)
      return p.text.find("instruction for s1") != std::string::npos ? format_verdict(Verdict::ignored())
                                                                    : format_verdict(Verdict::yes(Dimension::low_level));
    if (p.template_id.find("semantic") != std::string::npos)
      return format_verdict(no(Dimension::semantic, {"add"}));
    return format_verdict(Verdict::yes(Dimension::structure));
  });
  auto run = score_i2i(pairs, client, store, {.workers = 4, .flavor = Flavor::train_f1});
  EXPECT_EQ(calls.load(), 18);
  EXPECT_EQ(run.records.size(), 18u);
  EXPECT_DOUBLE_EQ(run.report.proportion.at(Dimension::structure), 1.0);
  EXPECT_DOUBLE_EQ(run.report.proportion.at(Dimension::semantic), 0.0);
  EXPECT_DOUBLE_EQ(run.report.proportion.at(Dimension::low_level), 5.0 / 6.0);
  for (const auto& r : run.records)
    EXPECT_FALSE(r.gt);
}

TEST_F(RunnerTest, McBenchmarkScoresRewards)
{
  AnnotationRecord ann{samples[2], samples[2].gt.problems(), {{"cup", *ProblemType::find(Dimension::semantic, "add")}},
                       {"desk", "lamp"}};
  auto questions = build_questions(std::vector{ann}, 3);
  ASSERT_EQ(questions.size(), 2u);
  ScriptedClient client([&](const RenderedPrompt& p) -> std::string {
    for (const auto& q : questions)
      if (p.text.find(q.stem) != std::string::npos && q.kind == QuestionKind::type) {
        json a = json::array();
        for (char c : q.correct.letters())
          a.push_back(std::string(1, c));
        return json{{"answer", a}}.dump();
      }
    return "no idea";
  });
  auto run = run_mc_benchmark(questions, client, store, RewardConfig{});
  ASSERT_EQ(run.records.size(), 2u);
  for (const auto& r : run.records) {
    if (r.kind == QuestionKind::type)
      EXPECT_EQ(r.reward.value, 1.0);
    else
      EXPECT_EQ(r.reward.gate, Gate::format_failed);
  }
}

TEST(RewardService, HttpSingleAndNdjson)
{
  RewardServer server(RewardConfig{});
  const int port = server.bind("127.0.0.1", 0);
  std::thread th([&] { server.serve(); });
  server.wait_until_ready();

  httplib::Client cli("127.0.0.1", port);
  auto health = cli.Get("/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->body, "ok");

  json req{{"task", "binary"},
           {"dimension", "semantic"},
           {"gt", {{"answer", "No"}, {"problem", {"add", "remove"}}}},
           {"pred_raw_text", format_verdict(no(Dimension::semantic, {"add", "replace"}))}};
  auto res = cli.Post("/reward", req.dump(), "application/json");
  ASSERT_TRUE(res);
  auto body = json::parse(res->body);
  // 1/2 hit, 1 false positive at alpha 0.5 over |P| = 2.
  EXPECT_DOUBLE_EQ(body["reward"].get<double>(), 0.25);
  EXPECT_EQ(body["gate"], "passed");

  json mc{{"task", "mc"}, {"gt", {"A", "C"}}, {"pred_raw_text", "{\"answer\":[\"C\"]}"}, {"option_count", 4}};
  auto batch = cli.Post("/reward", req.dump() + "\n" + mc.dump() + "\nnot json\n", "application/x-ndjson");
  ASSERT_TRUE(batch);
  std::istringstream lines(batch->body);
  std::vector<json> out;
  for (std::string l; std::getline(lines, l);)
    out.push_back(json::parse(l));
  ASSERT_EQ(out.size(), 3u);
  EXPECT_DOUBLE_EQ(out[0]["reward"].get<double>(), 0.25);
  EXPECT_DOUBLE_EQ(out[1]["reward"].get<double>(), 0.5);
  EXPECT_TRUE(out[2].contains("error"));

  EXPECT_THROW(RewardServer(RewardConfig{}).bind("127.0.0.1", port), BindFailure);
  server.stop();
  th.join();
}

TEST(RewardService, Stdio)
{
  std::istringstream in(
      "{\"task\":\"mc\",\"gt\":[\"B\"],\"pred_raw_text\":\"{\\\"answer\\\":[\\\"B\\\"]}\",\"config\":{\"M\":2}}\n\n"
      "{\"task\":\"mc\"}\n");
  std::ostringstream out;
  serve_rewards_stdio(in, out, RewardConfig{});
  std::istringstream lines(out.str());
  std::string first, second, extra;
  std::getline(lines, first);
  std::getline(lines, second);
  EXPECT_FALSE(std::getline(lines, extra));
  EXPECT_DOUBLE_EQ(json::parse(first)["reward"].get<double>(), 2.0);
  EXPECT_TRUE(json::parse(second).contains("error"));
}

TEST(Reports, WriteFailureRaisesIoFailure)
{
  EXPECT_THROW(write_text("/proc/definitely/not/here.json", "x"), IoFailure);
  EXPECT_EQ(report_format_from_string("md"), ReportFormat::markdown);
  EXPECT_FALSE(report_format_from_string("xml"));
}
