#pragma once

// Orchestration: benchmark evaluation, fidelity scoring, multiple-choice
// evaluation, the reward service and report emission.

#include "stablei2i/client.hpp"
#include "stablei2i/manifest.hpp"
#include "stablei2i/mcq.hpp"
#include "stablei2i/metrics.hpp"
#include "stablei2i/parser.hpp"
#include "stablei2i/rewards.hpp"
#include "stablei2i/templates.hpp"

#ifndef CPPHTTPLIB_LISTEN_BACKLOG
#define CPPHTTPLIB_LISTEN_BACKLOG 256
#endif
#include <httplib.h>

#include <csignal>
#include <iostream>

namespace stablei2i {

class IoFailure : public Error
{
public:
  using Error::Error;
};

class BindFailure : public Error
{
public:
  using Error::Error;
};

/// Replay mode hit a prompt with no cached response. Aborts the run.
class ReplayMiss : public Error
{
public:
  ReplayMiss(const std::string& sample_id, const CacheMiss& miss)
      : Error("sample " + sample_id + ": " + miss.what())
  {
  }
};

struct RunOptions
{
  std::size_t workers = 1;
  Flavor flavor = Flavor::bench;
};

namespace runner_detail {

/// Runs fn(i) for i in [0, n) on a bounded pool. The first exception is rethrown after all workers stop.
template <class F>
void parallel_for(std::size_t n, std::size_t workers, F&& fn)
{
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr first;
  std::mutex m;
  auto body = [&] {
    for (;;) {
      if (stop.load())
        return;
      const auto i = next.fetch_add(1);
      if (i >= n)
        return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(m);
        if (!first)
          first = std::current_exception();
        stop = true;
      }
    }
  };
  if (workers == 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back(body);
    for (auto& t : pool)
      t.join();
  }
  if (first)
    std::rethrow_exception(first);
}

// Calls the client; client failures become a ledger string, replay misses abort.
inline std::variant<RawResponse, std::string> call(ModelClient& client, const RenderedPrompt& prompt,
                                                   const std::string& sample_id)
{
  try {
    return client.complete(prompt);
  } catch (const CacheMiss& e) {
    throw ReplayMiss(sample_id, e);
  } catch (const ClientError& e) {
    return classify_client_error(e) + ": " + e.what();
  } catch (const ImageError& e) {
    return classify_client_error(e) + ": " + e.what();
  }
}

inline RenderedPrompt render_for(const TemplateStore& store, const BenchSample& s, Flavor flavor)
{
  if (flavor == Flavor::bench)
    return render_bench_prompt(store, s);
  if (flavor == Flavor::train_f1)
    return render_train_prompt(store, s, Flavor::train_f1, ProblemSet(s.dimension));
  throw Error("verdict evaluation needs the bench or train_f1 flavor");
}

inline EvalRecord judge(ModelClient& client, const TemplateStore& store, const BenchSample& s,
                        std::optional<Verdict> gt, Flavor flavor)
{
  const auto prompt = render_for(store, s, flavor);
  EvalRecord r;
  r.sample_id = s.id;
  r.dimension = s.dimension;
  r.gt = std::move(gt);
  r.model_id = client.model_id();
  r.template_id = prompt.template_id;
  r.template_fingerprint = prompt.template_fingerprint;
  auto res = call(client, prompt, s.id);
  if (auto* failure = std::get_if<std::string>(&res)) {
    r.request_failure = *failure;
    return r;
  }
  const auto& raw = std::get<RawResponse>(res);
  r.raw_ref = raw.key;
  auto parsed = parse_verdict_text(raw.text, s.dimension);
  if (parsed)
    r.pred = *parsed;
  else
    r.parse_failure = parsed.failure();
  return r;
}

}  // namespace runner_detail

/// Warnings for dimensions where no-issue samples exceed half of the set.
inline std::vector<std::string> balance_warnings(std::span<const BenchSample> samples)
{
  std::array<std::size_t, 3> total{}, clean{};
  for (const auto& s : samples) {
    ++total[index_of(s.dimension)];
    if (s.gt.answer() != Answer::no)
      ++clean[index_of(s.dimension)];
  }
  std::vector<std::string> out;
  for (auto d : kAllDimensions) {
    const auto i = index_of(d);
    if (total[i] && 2 * clean[i] > total[i])
      out.push_back(std::string(to_string(d)) + ": " + std::to_string(clean[i]) + " of " +
                    std::to_string(total[i]) + " samples have no issue (more than 50%)");
  }
  return out;
}

struct BenchmarkRun
{
  std::vector<EvalRecord> records;  // sorted by sample id, then dimension
  EvalReport report;
  std::vector<std::string> warnings;
};

inline BenchmarkRun run_benchmark(std::span<const BenchSample> samples, ModelClient& client,
                                  const TemplateStore& store, const RunOptions& opts = {})
{
  BenchmarkRun run;
  run.warnings = balance_warnings(samples);
  // Render everything up front so template problems surface before any request.
  for (const auto& s : samples)
    (void)runner_detail::render_for(store, s, opts.flavor);

  std::vector<EvalRecord> records(samples.size());
  runner_detail::parallel_for(samples.size(), opts.workers, [&](std::size_t i) {
    records[i] = runner_detail::judge(client, store, samples[i], samples[i].gt, opts.flavor);
  });
  sort_records(records);
  const auto dims = present_dimensions(records);
  if (dims.empty())
    throw EmptyDimension(Dimension::structure);
  json meta{{"model", client.model_id()},
            {"flavor", std::string(to_string(opts.flavor))},
            {"image_order", "images_then_text"},
            {"templates", store.fingerprints()},
            {"template_version", store.version()}};
  run.report = build_eval_report(records, dims, meta);
  run.records = std::move(records);
  return run;
}

struct FidelityRun
{
  std::vector<EvalRecord> records;
  FidelityReport report;
};

/// Judges every pair under each dimension in three separate queries and reports the share of Yes.
inline FidelityRun score_i2i(std::span<const PairSample> pairs, ModelClient& client,
                             const TemplateStore& store, const RunOptions& opts = {.workers = 1, .flavor = Flavor::train_f1})
{
  std::vector<BenchSample> jobs;
  for (const auto& p : pairs)
    for (auto d : kAllDimensions)
      jobs.push_back(BenchSample{p.id, p.input_image, p.output_image, p.task_prompt, d, Verdict::yes(d)});
  for (const auto& s : jobs)
    (void)runner_detail::render_for(store, s, opts.flavor);

  std::vector<EvalRecord> records(jobs.size());
  runner_detail::parallel_for(jobs.size(), opts.workers, [&](std::size_t i) {
    records[i] = runner_detail::judge(client, store, jobs[i], std::nullopt, opts.flavor);
  });
  sort_records(records);
  FidelityRun run;
  run.report = i2i_fidelity_score(records);
  run.report.metadata = json{{"model", client.model_id()},
                             {"flavor", std::string(to_string(opts.flavor))},
                             {"image_order", "images_then_text"},
                             {"templates", store.fingerprints()},
                             {"template_version", store.version()}};
  run.records = std::move(records);
  return run;
}

struct McRun
{
  std::vector<McRecord> records;
  McReport report;
};

inline McRun run_mc_benchmark(std::span<const MCQuestion> questions, ModelClient& client,
                              const TemplateStore& store, const RewardConfig& cfg, std::size_t workers = 1)
{
  cfg.validate();
  for (const auto& q : questions)
    (void)render_mcq_prompt(store, q);
  std::vector<McRecord> records(questions.size());
  runner_detail::parallel_for(questions.size(), workers, [&](std::size_t i) {
    const auto& q = questions[i];
    McRecord r;
    r.question_id = q.id;
    r.dimension = q.dimension;
    r.kind = q.kind;
    r.gt = q.correct;
    auto res = runner_detail::call(client, render_mcq_prompt(store, q), q.id);
    if (auto* failure = std::get_if<std::string>(&res)) {
      r.request_failure = *failure;
      r.reward = {0.0, Gate::format_failed};
    } else {
      const auto& raw = std::get<RawResponse>(res);
      r.raw_ref = raw.key;
      auto scored = score_mc_response(q.correct, raw.text, q.options.size(), cfg);
      r.reward = scored.score;
      r.parse_failure = scored.parse_failure;
      if (!scored.parse_failure)
        r.pred = parse_mc_answer_text(raw.text, q.options.size())->letters;
    }
    records[i] = std::move(r);
  });
  std::sort(records.begin(), records.end(),
            [](const McRecord& a, const McRecord& b) { return a.question_id < b.question_id; });
  McRun run;
  run.report = build_mc_report(records);
  run.report.metadata = json{{"model", client.model_id()},
                             {"M", cfg.max_mc},
                             {"alpha", cfg.alpha},
                             {"templates", store.fingerprints()}};
  run.records = std::move(records);
  return run;
}

// ---------------------------------------------------------------------------
// Reports

enum class ReportFormat { json, markdown, csv };

inline std::optional<ReportFormat> report_format_from_string(std::string_view s)
{
  if (s == "json") return ReportFormat::json;
  if (s == "md" || s == "markdown") return ReportFormat::markdown;
  if (s == "csv") return ReportFormat::csv;
  return std::nullopt;
}

inline std::string_view extension(ReportFormat f)
{
  switch (f) {
    case ReportFormat::json: return ".json";
    case ReportFormat::markdown: return ".md";
    case ReportFormat::csv: return ".csv";
  }
  return ".json";
}

inline std::string dump_json(const json& j)
{
  return j.dump(2, ' ', false, json::error_handler_t::replace) + "\n";
}

inline void write_text(const std::filesystem::path& file, std::string_view text)
{
  try {
    write_binary_file(file, text);
  } catch (const Error& e) {
    throw IoFailure(e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    throw IoFailure(e.what());
  }
}

inline std::string render_report(const EvalReport& rep, ReportFormat f)
{
  switch (f) {
    case ReportFormat::json: return dump_json(eval_report_to_json(rep));
    case ReportFormat::markdown: return eval_report_to_markdown(rep);
    case ReportFormat::csv: return eval_report_to_csv(rep);
  }
  return {};
}

inline std::string render_report(const FidelityReport& rep, ReportFormat f)
{
  switch (f) {
    case ReportFormat::json: return dump_json(fidelity_report_to_json(rep));
    case ReportFormat::markdown: return fidelity_report_to_markdown(rep);
    case ReportFormat::csv: return fidelity_report_to_csv(rep);
  }
  return {};
}

inline std::string render_report(const McReport& rep, ReportFormat f)
{
  switch (f) {
    case ReportFormat::json: return dump_json(mc_report_to_json(rep));
    case ReportFormat::markdown: return mc_report_to_markdown(rep);
    case ReportFormat::csv: return mc_report_to_csv(rep);
  }
  return {};
}

template <class Report>
void emit_report(const Report& rep, ReportFormat f, const std::filesystem::path& path)
{
  write_text(path, render_report(rep, f));
}

/// Writes report.{json,md,csv} under dir.
template <class Report>
void emit_all_formats(const Report& rep, const std::filesystem::path& dir, std::string_view stem = "report")
{
  for (auto f : {ReportFormat::json, ReportFormat::markdown, ReportFormat::csv})
    emit_report(rep, f, dir / (std::string(stem) + std::string(extension(f))));
}

inline void write_records(const std::filesystem::path& file, std::span<const EvalRecord> records)
{
  std::string out;
  for (const auto& r : records)
    out += record_to_json(r).dump(-1, ' ', false, json::error_handler_t::replace) + "\n";
  write_text(file, out);
}

inline void write_mc_records(const std::filesystem::path& file, std::span<const McRecord> records)
{
  std::string out;
  for (const auto& r : records)
    out += mc_record_to_json(r).dump(-1, ' ', false, json::error_handler_t::replace) + "\n";
  write_text(file, out);
}

// ---------------------------------------------------------------------------
// Reward service

/// Stateless reward endpoint: POST /reward with one request object, or an NDJSON body
/// answered line by line. GET /health answers "ok".
class RewardServer
{
public:
  explicit RewardServer(RewardConfig defaults, bool log_requests = false)
      : defaults_(defaults), log_(log_requests)
  {
    defaults_.validate();
    // httplib's defaults add SO_REUSEPORT, which lets a second server share the port silently.
    server_.set_socket_options([](socket_t sock) {
      int yes = 1;
      ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });
    // Trainers hold many keep-alive connections; each occupies a worker while open.
    server_.new_task_queue = [] {
      return new httplib::ThreadPool(std::max<std::size_t>(64, 4 * std::thread::hardware_concurrency()));
    };
    server_.set_keep_alive_max_count(1000);
    server_.Post("/reward", [this](const httplib::Request& req, httplib::Response& res) {
      res.set_content(handle_body(req.body), "application/json");
      if (log_) {
        std::lock_guard lock(log_mutex_);
        std::cerr << "reward " << req.body.size() << "B -> " << res.body.size() << "B\n";
      }
    });
    server_.Get("/health", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("ok", "text/plain");
    });
  }

  /// Binds without serving. Port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port)
  {
    int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (bound < 0)
      throw BindFailure("cannot bind " + host + ":" + std::to_string(port));
    return bound;
  }

  /// Blocks until stop().
  void serve() { server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() { server_.wait_until_ready(); }

  std::string handle_body(const std::string& body) const
  {
    auto whole = json::parse(body, nullptr, false);
    if (!whole.is_discarded())
      return handle_reward_request(whole, defaults_).dump(-1, ' ', false, json::error_handler_t::replace);
    std::string out;
    std::istringstream in(body);
    std::string line;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos)
        continue;
      out += handle_reward_line(line, defaults_) + "\n";
    }
    if (out.empty())
      out = json{{"error", "empty request body"}}.dump();
    return out;
  }

private:
  RewardConfig defaults_;
  bool log_;
  std::mutex log_mutex_;
  httplib::Server server_;
};

/// NDJSON over streams: one response line per request line, flushed per line.
inline void serve_rewards_stdio(std::istream& in, std::ostream& out, const RewardConfig& defaults)
{
  defaults.validate();
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    out << handle_reward_line(line, defaults) << '\n' << std::flush;
  }
}

namespace runner_detail {
inline std::atomic<bool> g_shutdown{false};
extern "C" inline void on_signal(int) { g_shutdown = true; }
}  // namespace runner_detail

/// Serves until SIGINT or SIGTERM, then shuts down cleanly.
inline void serve_rewards(const std::string& host, int port, const RewardConfig& cfg, bool log_requests = false,
                          std::ostream* announce = nullptr)
{
  RewardServer server(cfg, log_requests);
  const int bound = server.bind(host, port);
  if (announce)
    *announce << "listening on " << host << ":" << bound << std::endl;
  runner_detail::g_shutdown = false;
  std::signal(SIGINT, runner_detail::on_signal);
  std::signal(SIGTERM, runner_detail::on_signal);
  std::thread watcher([&] {
    while (!runner_detail::g_shutdown.load())
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    server.stop();
  });
  server.serve();
  runner_detail::g_shutdown = true;
  watcher.join();
}

}  // namespace stablei2i
