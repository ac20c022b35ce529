// stablei2i command-line tool.

#include "stablei2i/stablei2i.hpp"

#include <CLI11.hpp>

#include <ctime>
#include <iostream>

namespace fs = std::filesystem;
using namespace stablei2i;

namespace {

enum Exit { kOk = 0, kUsage = 1, kPartial = 2, kFatal = 3 };

struct Globals
{
  std::uint64_t seed = 0;
  std::string config_path;
  std::string out = "out";
  std::size_t workers = 1;
  bool replay_only = false;
};

struct ClientOptions
{
  std::string model;
  std::string endpoint;
  std::string cache = "cache";
};

json load_config(const std::string& path)
{
  if (path.empty())
    return json::object();
  std::ifstream in(path);
  if (!in)
    throw SchemaError("cannot open config " + path);
  auto j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw SchemaError("config " + path + " is not a JSON object");
  return j;
}

// Configuration problems are usage errors, not fatal ones.
template <class F>
auto config_step(F&& f)
{
  try {
    return f();
  } catch (const SchemaError&) {
    throw;
  } catch (const Error& e) {
    throw SchemaError(e.what());
  } catch (const json::exception& e) {
    throw SchemaError(std::string("config: ") + e.what());
  }
}

RewardConfig reward_config(const json& cfg)
{
  return config_step([&] {
    RewardConfig r;
    if (cfg.contains("rewards")) {
      r.max_mc = cfg["rewards"].value("M", r.max_mc);
      r.alpha = cfg["rewards"].value("alpha", r.alpha);
    }
    r.validate();
    return r;
  });
}

ModelConfig model_config(const json& cfg, const ClientOptions& opts)
{
  json m = cfg.contains("model") ? cfg["model"] : json::object();
  if (!m.is_object())
    throw SchemaError("config model must be an object");
  if (!opts.model.empty())
    m["model"] = opts.model;
  if (!opts.endpoint.empty())
    m["endpoint"] = opts.endpoint;
  if (m.value("model", "").empty())
    throw SchemaError("a model identifier is required (--model or config model.model)");
  return config_step([&] { return ModelConfig::from_json(m); });
}

std::shared_ptr<ModelClient> make_client(const Globals& g, const ModelConfig& m, const ClientOptions& opts)
{
  auto cache = std::make_shared<ResponseCache>(opts.cache);
  if (g.replay_only)
    return std::make_shared<ReplayClient>(m.model, cache);
  if (m.endpoint.empty())
    throw SchemaError("an endpoint is required unless --replay-only is set");
  return std::make_shared<ChatClient>(m, std::make_shared<HttplibTransport>(m.endpoint), cache);
}

std::string utc_now()
{
  std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

void write_run_manifest(const Globals& g, const std::string& subcommand, const json& inputs, const json& extra)
{
  json m{{"subcommand", subcommand},
         {"inputs", inputs},
         {"seed", g.seed},
         {"out", g.out},
         {"workers", g.workers},
         {"replay_only", g.replay_only},
         {"config", load_config(g.config_path)},
         {"created_at", utc_now()}};
  for (auto it = extra.begin(); it != extra.end(); ++it)
    m[it.key()] = it.value();
  write_text(fs::path(g.out) / "run_manifest.json", dump_json(m));
}

void add_client_options(CLI::App* cmd, ClientOptions& o)
{
  cmd->add_option("--model", o.model, "Model identifier (overrides config)");
  cmd->add_option("--endpoint", o.endpoint, "Chat-completion endpoint URL (overrides config)");
  cmd->add_option("--cache", o.cache, "Response cache directory")->capture_default_str();
}

void print_warnings(const std::vector<std::string>& warnings)
{
  for (const auto& w : warnings)
    std::cerr << "warning: " << w << "\n";
}

std::vector<fs::path> list_images(const fs::path& src)
{
  std::vector<fs::path> out;
  if (fs::is_directory(src)) {
    for (const auto& e : fs::directory_iterator(src)) {
      auto ext = e.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
      if (e.is_regular_file() && (ext == ".png" || ext == ".jpg" || ext == ".jpeg"))
        out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
  }
  std::ifstream in(src);
  if (!in)
    throw SchemaError("cannot open image list " + src.string());
  std::string line;
  while (std::getline(in, line))
    if (!line.empty())
      out.push_back(fs::path(line).is_relative() ? src.parent_path() / line : fs::path(line));
  return out;
}

json labels_to_json(const std::map<Dimension, Verdict>& labels)
{
  json j = json::object();
  for (const auto& [d, v] : labels)
    j[std::string(to_string(d))] = verdict_to_json(v);
  return j;
}

}  // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Fidelity evaluation harness for image-to-image transitions"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Run seed")->capture_default_str();
  app.add_option("--config", g.config_path, "JSON config (model, rewards, synth ranges)");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--workers", g.workers, "Concurrent workers")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_flag("--replay-only", g.replay_only, "Serve every request from the cache; a miss aborts");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a judge on a labeled benchmark manifest");
  std::string bench_path;
  std::string eval_flavor = "bench";
  ClientOptions eval_client;
  eval->add_option("--bench", bench_path, "Benchmark manifest (JSONL)")->required();
  eval->add_option("--flavor", eval_flavor, "Prompt flavor: bench or train_f1")->capture_default_str();
  add_client_options(eval, eval_client);

  // score
  auto* score = app.add_subcommand("score", "Score image pairs with the proportion-of-Yes protocol");
  std::string pairs_path;
  std::string score_flavor = "train_f1";
  std::string bench_name;
  ClientOptions score_client;
  score->add_option("--pairs", pairs_path, "Pairs manifest (JSONL)")->required();
  score->add_option("--flavor", score_flavor, "Prompt flavor: train_f1 or bench")->capture_default_str();
  score->add_option("--name", bench_name, "Benchmark label for the report");
  add_client_options(score, score_client);

  // synth
  auto* synth = app.add_subcommand("synth", "Synthesize labeled pairs from clean images");
  std::string synth_images;
  std::string synth_mode = "crop";
  std::vector<std::string> synth_ops;
  std::size_t max_side = kMaxSide;
  synth->add_option("--images", synth_images, "Image directory or list file")->required();
  synth->add_option("--mode", synth_mode, "crop or degrade")->check(CLI::IsMember({"crop", "degrade"}))
      ->capture_default_str();
  synth->add_option("--ops", synth_ops, "Degradations to draw from: blur noise color_cast exposure jpeg");
  synth->add_option("--max-side", max_side, "Longest side after resizing")->capture_default_str();

  // mcq
  auto* mcq = app.add_subcommand("mcq", "Build multiple-choice questions or evaluate a judge on them");
  std::string ann_path;
  std::string questions_path;
  std::size_t distractors = 3;
  ClientOptions mcq_client;
  mcq->add_option("--annotations", ann_path, "Annotation manifest to build questions from");
  mcq->add_option("--questions", questions_path, "Question manifest to evaluate");
  mcq->add_option("--distractors", distractors, "Subtype distractor count")->capture_default_str();
  add_client_options(mcq, mcq_client);

  // reward-serve
  auto* serve = app.add_subcommand("reward-serve", "Serve rewards over HTTP or stdio");
  std::string host = "127.0.0.1";
  int port = 8765;
  bool stdio = false;
  bool log_requests = false;
  std::optional<double> alpha, max_mc;
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--port", port, "0 picks a free port")->capture_default_str();
  serve->add_flag("--stdio", stdio, "Read NDJSON requests from stdin instead of HTTP");
  serve->add_flag("--log", log_requests, "Log request sizes to stderr");
  serve->add_option("--alpha", alpha, "False-positive penalty");
  serve->add_option("--M", max_mc, "Maximum multiple-choice reward");

  // report
  auto* report = app.add_subcommand("report", "Recompute reports from a record file");
  std::string records_path;
  std::string report_kind = "eval";
  report->add_option("--records", records_path, "records.jsonl")->required();
  report->add_option("--kind", report_kind, "eval or fidelity")->check(CLI::IsMember({"eval", "fidelity"}))
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    const json cfg = load_config(g.config_path);
    const fs::path out(g.out);

    if (*eval) {
      auto flavor = flavor_from_string(eval_flavor);
      if (!flavor || (*flavor != Flavor::bench && *flavor != Flavor::train_f1))
        throw SchemaError("--flavor must be bench or train_f1");
      auto samples = load_bench_manifest(bench_path);
      auto store = TemplateStore::load();
      auto model = model_config(cfg, eval_client);
      auto client = make_client(g, model, eval_client);
      auto run = run_benchmark(samples, *client, store, {g.workers, *flavor});
      print_warnings(run.warnings);
      run.report.metadata["seed"] = g.seed;
      run.report.metadata["temperature"] = model.temperature;
      write_records(out / "records.jsonl", run.records);
      emit_all_formats(run.report, out);
      write_run_manifest(g, "eval", {{"bench", bench_path}},
                         {{"model", model.to_json()}, {"flavor", eval_flavor}, {"cache", eval_client.cache}});
      std::cout << eval_report_to_markdown(run.report);
      return run.report.tallies[0].request_failures + run.report.tallies[1].request_failures +
                         run.report.tallies[2].request_failures
                 ? kPartial
                 : kOk;
    }

    if (*score) {
      auto flavor = flavor_from_string(score_flavor);
      if (!flavor || (*flavor != Flavor::bench && *flavor != Flavor::train_f1))
        throw SchemaError("--flavor must be train_f1 or bench");
      auto pairs = load_pairs_manifest(pairs_path);
      auto store = TemplateStore::load();
      auto model = model_config(cfg, score_client);
      auto client = make_client(g, model, score_client);
      auto run = score_i2i(pairs, *client, store, {g.workers, *flavor});
      run.report.metadata["seed"] = g.seed;
      run.report.metadata["temperature"] = model.temperature;
      if (!bench_name.empty())
        run.report.metadata["benchmark"] = bench_name;
      write_records(out / "records.jsonl", run.records);
      emit_all_formats(run.report, out);
      write_run_manifest(g, "score", {{"pairs", pairs_path}},
                         {{"model", model.to_json()}, {"flavor", score_flavor}, {"cache", score_client.cache}});
      std::cout << fidelity_report_to_markdown(run.report);
      bool partial = std::any_of(run.records.begin(), run.records.end(),
                                 [](const EvalRecord& r) { return r.request_failure.has_value(); });
      return partial ? kPartial : kOk;
    }

    if (*synth) {
      const auto ranges = config_step(
          [&] { return cfg.contains("synth") ? DegradationRanges::from_json(cfg["synth"]) : DegradationRanges{}; });
      std::unique_ptr<PairSource> source;
      if (synth_mode == "crop") {
        source = std::make_unique<TextureCropSource>();
      } else {
        std::vector<DegradationKind> kinds;
        for (const auto& o : synth_ops) {
          auto k = degradation_kind_from_string(o);
          if (!k)
            throw SchemaError("unknown degradation '" + o + "'");
          kinds.push_back(*k);
        }
        if (kinds.empty())
          kinds.assign(kAllDegradationKinds.begin(), kAllDegradationKinds.end());
        source = std::make_unique<DegradationSource>(kinds, ranges);
      }
      const auto images = list_images(synth_images);
      std::vector<json> rows;
      for (std::size_t i = 0; i < images.size(); ++i) {
        const auto img = resize_cap(read_image(images[i]), max_side);
        auto pair = source->generate(img, detail::derive_seed(g.seed, i));
        const auto stem = images[i].stem().string() + "_" + std::to_string(i);
        const auto a = fs::path("pairs") / (stem + "_a.png");
        const auto b = fs::path("pairs") / (stem + "_b.png");
        write_png(out / a, pair.image_a);
        write_png(out / b, pair.image_b);
        pair.provenance["source_image"] = images[i].generic_string();
        pair.provenance["max_side"] = max_side;
        rows.push_back(json{{"id", stem},
                            {"source", source->name()},
                            {"input_image", a.generic_string()},
                            {"output_image", b.generic_string()},
                            {"labels", labels_to_json(pair.labels)},
                            {"provenance", pair.provenance}});
      }
      write_jsonl(out / "synth.jsonl", rows);
      write_run_manifest(g, "synth", {{"images", synth_images}},
                         {{"mode", synth_mode}, {"ops", synth_ops}, {"ranges", ranges.to_json()}});
      std::cout << rows.size() << " pairs written to " << (out / "synth.jsonl").string() << "\n";
      return kOk;
    }

    if (*mcq) {
      if (ann_path.empty() == questions_path.empty())
        throw SchemaError("mcq needs exactly one of --annotations or --questions");
      if (!ann_path.empty()) {
        auto anns = load_annotation_manifest(ann_path);
        auto qs = build_questions(anns, g.seed, distractors);
        std::vector<json> rows;
        for (const auto& q : qs) {
          auto row = question_to_json(q);
          // Keep image paths usable relative to the output manifest.
          row["input_image"] = fs::absolute(q.input_image).generic_string();
          row["output_image"] = fs::absolute(q.output_image).generic_string();
          rows.push_back(std::move(row));
        }
        write_jsonl(out / "questions.jsonl", rows);
        write_run_manifest(g, "mcq", {{"annotations", ann_path}}, {{"distractors", distractors}});
        std::cout << qs.size() << " questions written to " << (out / "questions.jsonl").string() << "\n";
        return kOk;
      }
      auto qs = load_question_manifest(questions_path);
      auto store = TemplateStore::load();
      auto model = model_config(cfg, mcq_client);
      auto client = make_client(g, model, mcq_client);
      const auto rcfg = reward_config(cfg);
      auto run = run_mc_benchmark(qs, *client, store, rcfg, g.workers);
      write_mc_records(out / "mc_records.jsonl", run.records);
      emit_all_formats(run.report, out);
      write_run_manifest(g, "mcq", {{"questions", questions_path}},
                         {{"model", model.to_json()}, {"M", rcfg.max_mc}, {"alpha", rcfg.alpha}});
      std::cout << mc_report_to_markdown(run.report);
      return run.report.request_failures ? kPartial : kOk;
    }

    if (*serve) {
      auto rcfg = reward_config(cfg);
      if (alpha)
        rcfg.alpha = *alpha;
      if (max_mc)
        rcfg.max_mc = *max_mc;
      config_step([&] { rcfg.validate(); });
      if (stdio)
        serve_rewards_stdio(std::cin, std::cout, rcfg);
      else
        serve_rewards(host, port, rcfg, log_requests, &std::cerr);
      return kOk;
    }

    if (*report) {
      auto records = load_records(records_path);
      if (report_kind == "eval") {
        auto rep = build_eval_report(records, present_dimensions(records));
        emit_all_formats(rep, out);
        std::cout << eval_report_to_markdown(rep);
      } else {
        auto rep = i2i_fidelity_score(records);
        emit_all_formats(rep, out);
        std::cout << fidelity_report_to_markdown(rep);
      }
      return kOk;
    }
  } catch (const SchemaError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const EmptyDimension& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const BindFailure& e) {
    std::cerr << "fatal: " << e.what() << "\n";
    return kFatal;
  } catch (const std::exception& e) {
    std::cerr << "fatal: " << e.what() << "\n";
    return kFatal;
  }
  return kUsage;
}
