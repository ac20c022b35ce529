#pragma once

// Model endpoint access: content-addressed response cache, chat-completion
// client with retries and bounded concurrency, and an offline replay client.

#include "stablei2i/core.hpp"
#include "stablei2i/detail/digest.hpp"
#include "stablei2i/image.hpp"
#include "stablei2i/templates.hpp"

#ifndef CPPHTTPLIB_LISTEN_BACKLOG
#define CPPHTTPLIB_LISTEN_BACKLOG 256
#endif
#include <httplib.h>
#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>

namespace stablei2i {

// ---------------------------------------------------------------------------
// Errors

class ClientError : public Error
{
public:
  using Error::Error;
};

class Timeout : public ClientError
{
public:
  using ClientError::ClientError;
};

class AuthFailure : public ClientError
{
public:
  using ClientError::ClientError;
};

class EndpointError : public ClientError
{
public:
  EndpointError(int status, const std::string& what)
      : ClientError("endpoint returned " + std::to_string(status) + ": " + what), status_(status)
  {
  }
  int status() const { return status_; }

private:
  int status_;
};

class ExhaustedRetries : public ClientError
{
public:
  ExhaustedRetries(int attempts, const std::string& last)
      : ClientError("gave up after " + std::to_string(attempts) + " attempts: " + last), attempts_(attempts)
  {
  }
  int attempts() const { return attempts_; }

private:
  int attempts_;
};

class CacheMiss : public ClientError
{
public:
  explicit CacheMiss(std::string key) : ClientError("cache miss for key " + key), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

private:
  std::string key_;
};

/// Short classification used in failure ledgers.
inline std::string classify_client_error(const std::exception& e)
{
  if (dynamic_cast<const CacheMiss*>(&e)) return "cache_miss";
  if (dynamic_cast<const AuthFailure*>(&e)) return "auth_failure";
  if (dynamic_cast<const Timeout*>(&e)) return "timeout";
  if (dynamic_cast<const ExhaustedRetries*>(&e)) return "exhausted_retries";
  if (dynamic_cast<const EndpointError*>(&e)) return "endpoint_error";
  if (dynamic_cast<const ImageError*>(&e)) return "image_error";
  return "client_error";
}

// ---------------------------------------------------------------------------
// Configuration

struct ModelConfig
{
  std::string endpoint;  // e.g. http://127.0.0.1:8000/v1/chat/completions
  std::string model;
  std::string auth_env;  // name of the environment variable holding the bearer token
  int timeout_ms = 120000;
  int max_in_flight = 4;
  int max_attempts = 4;
  int backoff_base_ms = 500;
  double temperature = 0.0;
  std::optional<int> max_tokens;

  void validate() const
  {
    if (model.empty())
      throw Error("model config: model identifier is required");
    if (timeout_ms <= 0)
      throw Error("model config: timeout must be positive");
    if (max_in_flight < 1)
      throw Error("model config: max_in_flight must be at least 1");
    if (max_attempts < 1)
      throw Error("model config: max_attempts must be at least 1");
    if (backoff_base_ms < 0)
      throw Error("model config: backoff base must be non-negative");
  }

  static ModelConfig from_json(const json& j)
  {
    if (j.contains("token") || j.contains("api_key"))
      throw Error("model config: tokens are read from the environment, set auth_env instead");
    ModelConfig c;
    c.endpoint = j.value("endpoint", "");
    c.model = j.value("model", "");
    c.auth_env = j.value("auth_env", "");
    c.timeout_ms = j.value("timeout_ms", c.timeout_ms);
    c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
    if (j.contains("retry")) {
      c.max_attempts = j["retry"].value("max_attempts", c.max_attempts);
      c.backoff_base_ms = j["retry"].value("backoff_base_ms", c.backoff_base_ms);
    }
    c.temperature = j.value("temperature", c.temperature);
    if (j.contains("max_tokens"))
      c.max_tokens = j["max_tokens"].get<int>();
    c.validate();
    return c;
  }

  json to_json() const
  {
    json j{{"endpoint", endpoint},
           {"model", model},
           {"auth_env", auth_env},
           {"timeout_ms", timeout_ms},
           {"max_in_flight", max_in_flight},
           {"retry", {{"max_attempts", max_attempts}, {"backoff_base_ms", backoff_base_ms}}},
           {"temperature", temperature}};
    if (max_tokens)
      j["max_tokens"] = *max_tokens;
    return j;
  }
};

// ---------------------------------------------------------------------------
// Cache

inline std::string image_digest(const std::filesystem::path& file)
{
  return detail::sha256_hex(read_binary_file(file));
}

inline std::string cache_key(std::string_view model, std::string_view template_fingerprint,
                             std::string_view prompt_text, std::string_view input_digest,
                             std::string_view output_digest)
{
  return detail::Sha256{}
      .field("stablei2i.cache/1")
      .field(model)
      .field(template_fingerprint)
      .field(prompt_text)
      .field(input_digest)
      .field(output_digest)
      .hex();
}

inline std::string cache_key(std::string_view model, const RenderedPrompt& p)
{
  return cache_key(model, p.template_fingerprint, p.text, image_digest(p.image_refs[0]),
                   image_digest(p.image_refs[1]));
}

/// cache/<model-id>/<2-char shard>/<key>.resp plus <key>.meta.
class ResponseCache
{
public:
  explicit ResponseCache(std::filesystem::path root) : root_(std::move(root)) {}

  const std::filesystem::path& root() const { return root_; }

  std::filesystem::path entry_path(std::string_view model, std::string_view key) const
  {
    if (key.size() < 3)
      throw Error("cache key too short");
    return root_ / safe_component(model) / std::string(key.substr(0, 2)) / std::string(key);
  }

  std::optional<std::string> get(std::string_view model, std::string_view key) const
  {
    auto p = entry_path(model, key);
    p += ".resp";
    std::ifstream in(p, std::ios::binary);
    if (!in)
      return std::nullopt;
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  std::optional<json> meta(std::string_view model, std::string_view key) const
  {
    auto p = entry_path(model, key);
    p += ".meta";
    std::ifstream in(p);
    if (!in)
      return std::nullopt;
    auto j = json::parse(in, nullptr, false);
    if (j.is_discarded())
      return std::nullopt;
    return j;
  }

  /// Meta first, then the response; a .resp file marks a complete entry.
  void put(std::string_view model, std::string_view key, std::string_view text, const json& metadata) const
  {
    const auto base = entry_path(model, key);
    std::filesystem::create_directories(base.parent_path());
    auto meta_path = base;
    meta_path += ".meta";
    auto resp_path = base;
    resp_path += ".resp";
    atomic_write(meta_path, metadata.dump(2, ' ', false, json::error_handler_t::replace) + "\n");
    atomic_write(resp_path, text);
  }

  /// Replaces characters that are unsafe in a directory name.
  static std::string safe_component(std::string_view s)
  {
    std::string out;
    for (char c : s)
      out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.' ? c : '_');
    if (out.empty() || out == "." || out == "..")
      out = "_" + out;
    return out;
  }

private:
  static void atomic_write(const std::filesystem::path& target, std::string_view bytes)
  {
    static std::atomic<std::uint64_t> counter{0};
    auto tmp = target;
    tmp += ".tmp." + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())) + "." +
           std::to_string(counter.fetch_add(1));
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out || !out.write(bytes.data(), static_cast<std::streamsize>(bytes.size())))
        throw Error("cannot write cache entry " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, target, ec);
    if (ec) {
      std::filesystem::remove(tmp);
      throw Error("cannot publish cache entry " + target.string() + ": " + ec.message());
    }
  }

  std::filesystem::path root_;
};

// ---------------------------------------------------------------------------
// Transport

struct HttpResult
{
  int status = 0;  // 0: no HTTP response
  std::string body;
  std::string error;
  bool timed_out = false;
};

class Transport
{
public:
  virtual ~Transport() = default;
  virtual HttpResult post(const std::string& body, const std::string& bearer_token, int timeout_ms) = 0;
};

/// cpp-httplib transport for http:// and https:// endpoints.
class HttplibTransport final : public Transport
{
public:
  explicit HttplibTransport(const std::string& endpoint)
  {
    auto scheme_end = endpoint.find("://");
    if (scheme_end == std::string::npos)
      throw Error("endpoint must start with http:// or https://");
    auto path_start = endpoint.find('/', scheme_end + 3);
    origin_ = endpoint.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : endpoint.substr(path_start);
  }

  HttpResult post(const std::string& body, const std::string& bearer_token, int timeout_ms) override
  {
    httplib::Client cli(origin_);
    const auto secs = timeout_ms / 1000;
    const auto usecs = (timeout_ms % 1000) * 1000;
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    httplib::Headers headers;
    if (!bearer_token.empty())
      headers.emplace("Authorization", "Bearer " + bearer_token);
    auto res = cli.Post(path_, headers, body, "application/json");
    HttpResult out;
    if (!res) {
      out.error = httplib::to_string(res.error());
      out.timed_out = res.error() == httplib::Error::Read || res.error() == httplib::Error::Write ||
                      res.error() == httplib::Error::ConnectionTimeout;
      return out;
    }
    out.status = res->status;
    out.body = res->body;
    return out;
  }

private:
  std::string origin_;
  std::string path_;
};

// ---------------------------------------------------------------------------
// Clients

struct RawResponse
{
  std::string text;
  std::string key;
  bool from_cache = false;
  int attempts = 0;
  double latency_ms = 0.0;
};

class ModelClient
{
public:
  virtual ~ModelClient() = default;
  virtual std::string model_id() const = 0;
  virtual RawResponse complete(const RenderedPrompt& prompt) = 0;
};

namespace client_detail {

inline std::string mime_of(std::string_view bytes)
{
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), "\x89PNG\r\n\x1a\n", 8) == 0)
    return "image/png";
  if (bytes.size() >= 2 && static_cast<unsigned char>(bytes[0]) == 0xFF &&
      static_cast<unsigned char>(bytes[1]) == 0xD8)
    return "image/jpeg";
  throw ImageError("unsupported image format");
}

inline json image_part(std::string_view bytes)
{
  return json{{"type", "image_url"},
              {"image_url", {{"url", "data:" + mime_of(bytes) + ";base64," + detail::base64_encode(bytes)}}}};
}

inline bool transient(int status)
{
  return status == 0 || status == 408 || status == 429 || status >= 500;
}

// choices[0].message.content as a string or a list of text parts.
inline std::optional<std::string> extract_content(const std::string& body)
{
  auto j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("choices") || !j["choices"].is_array() ||
      j["choices"].empty())
    return std::nullopt;
  const auto& msg = j["choices"][0].value("message", json::object());
  if (!msg.contains("content"))
    return std::nullopt;
  const auto& c = msg["content"];
  if (c.is_string())
    return c.get<std::string>();
  if (c.is_array()) {
    std::string out;
    for (const auto& part : c)
      if (part.is_object() && part.value("type", "") == "text")
        out += part.value("text", "");
    return out;
  }
  if (c.is_null())
    return std::string();
  return std::nullopt;
}

class InFlightLimit
{
public:
  explicit InFlightLimit(int limit) : limit_(limit) {}
  void acquire()
  {
    std::unique_lock lock(m_);
    cv_.wait(lock, [&] { return active_ < limit_; });
    ++active_;
  }
  void release()
  {
    {
      std::lock_guard lock(m_);
      --active_;
    }
    cv_.notify_one();
  }

private:
  std::mutex m_;
  std::condition_variable cv_;
  int limit_;
  int active_ = 0;
};

}  // namespace client_detail

/// Builds the chat-completion request: images first, in slot order, then the prompt text.
inline json build_chat_request(const ModelConfig& cfg, const RenderedPrompt& prompt)
{
  json content = json::array();
  for (const auto& img : prompt.image_refs)
    content.push_back(client_detail::image_part(read_binary_file(img)));
  content.push_back({{"type", "text"}, {"text", prompt.text}});
  json req{{"model", cfg.model},
           {"temperature", cfg.temperature},
           {"messages", json::array({{{"role", "user"}, {"content", content}}})}};
  if (cfg.max_tokens)
    req["max_tokens"] = *cfg.max_tokens;
  return req;
}

/// Live client. Cache hits never touch the transport.
class ChatClient final : public ModelClient
{
public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  ChatClient(ModelConfig cfg, std::shared_ptr<Transport> transport, std::shared_ptr<ResponseCache> cache,
             Sleeper sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })
      : cfg_(std::move(cfg)),
        transport_(std::move(transport)),
        cache_(std::move(cache)),
        sleep_(std::move(sleeper)),
        gate_(cfg_.max_in_flight)
  {
    cfg_.validate();
    if (!transport_)
      throw Error("chat client needs a transport");
  }

  std::string model_id() const override { return cfg_.model; }
  std::size_t network_calls() const { return calls_.load(); }

  RawResponse complete(const RenderedPrompt& prompt) override
  {
    const auto in_digest = image_digest(prompt.image_refs[0]);
    const auto out_digest = image_digest(prompt.image_refs[1]);
    RawResponse r;
    r.key = cache_key(cfg_.model, prompt.template_fingerprint, prompt.text, in_digest, out_digest);
    if (cache_)
      if (auto hit = cache_->get(cfg_.model, r.key)) {
        r.text = std::move(*hit);
        r.from_cache = true;
        return r;
      }

    const auto body = build_chat_request(cfg_, prompt).dump();
    const auto token = bearer_token();
    const auto start = std::chrono::steady_clock::now();
    std::string last_error;
    bool last_timed_out = false;
    for (int attempt = 1; attempt <= cfg_.max_attempts; ++attempt) {
      r.attempts = attempt;
      HttpResult res;
      gate_.acquire();
      try {
        ++calls_;
        res = transport_->post(body, token, cfg_.timeout_ms);
      } catch (...) {
        gate_.release();
        throw;
      }
      gate_.release();
      last_timed_out = res.status == 0 && res.timed_out;

      if (res.status >= 200 && res.status < 300) {
        auto text = client_detail::extract_content(res.body);
        if (!text)
          throw EndpointError(res.status, "unexpected response shape");
        r.text = std::move(*text);
        r.latency_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        if (cache_)
          cache_->put(cfg_.model, r.key, r.text,
                      json{{"model", cfg_.model},
                           {"template_id", prompt.template_id},
                           {"template_fingerprint", prompt.template_fingerprint},
                           {"image_digests", {in_digest, out_digest}},
                           {"attempts", r.attempts},
                           {"latency_ms", r.latency_ms},
                           {"temperature", cfg_.temperature},
                           {"status", res.status}});
        return r;
      }
      if (res.status == 401 || res.status == 403)
        throw AuthFailure("endpoint rejected credentials (" + std::to_string(res.status) + ")");
      if (!client_detail::transient(res.status))
        throw EndpointError(res.status, res.body.substr(0, 200));

      last_error = res.status == 0 ? (res.timed_out ? "timeout: " : "network: ") + res.error
                                   : "status " + std::to_string(res.status);
      if (attempt < cfg_.max_attempts && cfg_.backoff_base_ms > 0)
        sleep_(std::chrono::milliseconds(static_cast<std::int64_t>(cfg_.backoff_base_ms) << (attempt - 1)));
    }
    if (last_timed_out)
      throw Timeout("request timed out after " + std::to_string(cfg_.max_attempts) + " attempts");
    throw ExhaustedRetries(cfg_.max_attempts, last_error);
  }

private:
  std::string bearer_token() const
  {
    if (cfg_.auth_env.empty())
      return {};
    const char* v = std::getenv(cfg_.auth_env.c_str());
    if (!v)
      throw AuthFailure("environment variable " + cfg_.auth_env + " is not set");
    return v;
  }

  ModelConfig cfg_;
  std::shared_ptr<Transport> transport_;
  std::shared_ptr<ResponseCache> cache_;
  Sleeper sleep_;
  client_detail::InFlightLimit gate_;
  std::atomic<std::size_t> calls_{0};
};

/// Offline client: every prompt must already be cached.
class ReplayClient final : public ModelClient
{
public:
  ReplayClient(std::string model, std::shared_ptr<ResponseCache> cache)
      : model_(std::move(model)), cache_(std::move(cache))
  {
    if (!cache_ || !std::filesystem::is_directory(cache_->root()))
      throw Error("replay cache directory does not exist");
  }

  std::string model_id() const override { return model_; }

  RawResponse complete(const RenderedPrompt& prompt) override
  {
    RawResponse r;
    r.key = cache_key(model_, prompt);
    auto hit = cache_->get(model_, r.key);
    if (!hit)
      throw CacheMiss(r.key);
    r.text = std::move(*hit);
    r.from_cache = true;
    return r;
  }

private:
  std::string model_;
  std::shared_ptr<ResponseCache> cache_;
};

inline std::shared_ptr<ModelClient> replay_only(const std::filesystem::path& cache_dir, std::string model)
{
  return std::make_shared<ReplayClient>(std::move(model), std::make_shared<ResponseCache>(cache_dir));
}

}  // namespace stablei2i
