#pragma once

// Extraction and validation of structured model answers.
//
// Every entry point is total: any input text yields either a value or a
// classified ParseFailure. Nothing here throws on model output.

#include "stablei2i/core.hpp"
#include "stablei2i/manifest.hpp"

#include <nlohmann/json.hpp>

#include <variant>

namespace stablei2i {

enum class FailureReason { no_object, malformed, schema, vocabulary };

inline std::string_view to_string(FailureReason r)
{
  switch (r) {
    case FailureReason::no_object: return "no_object";
    case FailureReason::malformed: return "malformed";
    case FailureReason::schema: return "schema";
    case FailureReason::vocabulary: return "vocabulary";
  }
  return "malformed";
}

inline constexpr std::array<FailureReason, 4> kAllFailureReasons{
    FailureReason::no_object, FailureReason::malformed, FailureReason::schema,
    FailureReason::vocabulary};

inline std::optional<FailureReason> failure_reason_from_string(std::string_view s)
{
  for (auto r : kAllFailureReasons)
    if (to_string(r) == s)
      return r;
  return std::nullopt;
}

inline constexpr std::size_t kMaxExcerpt = 200;

struct ParseFailure
{
  FailureReason reason;
  std::string excerpt;  // at most kMaxExcerpt bytes
  std::string detail;

  bool operator==(const ParseFailure&) const = default;
};

inline std::string make_excerpt(std::string_view raw)
{
  // Invalid UTF-8 becomes U+FFFD so excerpts always serialize into reports.
  auto clean = json::parse(json(std::string(raw)).dump(-1, ' ', false, json::error_handler_t::replace))
                   .get<std::string>();
  std::string_view text = clean;
  if (text.size() <= kMaxExcerpt)
    return clean;
  // Do not cut a UTF-8 sequence in half.
  std::size_t n = kMaxExcerpt;
  while (n > 0 && (static_cast<unsigned char>(text[n]) & 0xC0) == 0x80)
    --n;
  return std::string(text.substr(0, n));
}

template <class T>
class ParseOutcome
{
public:
  ParseOutcome(T value) : v_(std::move(value)) {}
  ParseOutcome(ParseFailure failure) : v_(std::move(failure)) {}

  bool ok() const { return std::holds_alternative<T>(v_); }
  explicit operator bool() const { return ok(); }
  const T& value() const { return std::get<T>(v_); }
  const T& operator*() const { return value(); }
  const T* operator->() const { return &value(); }
  const ParseFailure& failure() const { return std::get<ParseFailure>(v_); }

private:
  std::variant<T, ParseFailure> v_;
};

namespace parse_detail {

inline ParseFailure fail(FailureReason r, std::string_view source, std::string detail)
{
  return ParseFailure{r, make_excerpt(source), std::move(detail)};
}

// Position one past the matching close brace of the object opening at `open`,
// or npos when it never balances. String literals are skipped.
inline std::size_t balanced_end(std::string_view s, std::size_t open)
{
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    char c = s[i];
    if (in_string) {
      if (escaped)
        escaped = false;
      else if (c == '\\')
        escaped = true;
      else if (c == '"')
        in_string = false;
      continue;
    }
    if (c == '"')
      in_string = true;
    else if (c == '{')
      ++depth;
    else if (c == '}') {
      if (--depth == 0)
        return i + 1;
    }
  }
  return std::string_view::npos;
}

// Body of the first ``` fence, language tag line dropped.
inline std::optional<std::string_view> fenced_body(std::string_view s)
{
  auto open = s.find("```");
  if (open == std::string_view::npos)
    return std::nullopt;
  auto body_start = s.find('\n', open + 3);
  if (body_start == std::string_view::npos)
    return std::nullopt;
  ++body_start;
  auto close = s.find("```", body_start);
  if (close == std::string_view::npos)
    close = s.size();
  return s.substr(body_start, close - body_start);
}

struct Scan
{
  std::optional<std::string_view> object;
  bool any_open = false;
};

inline Scan first_balanced(std::string_view s)
{
  Scan scan;
  for (auto open = s.find('{'); open != std::string_view::npos; open = s.find('{', open + 1)) {
    scan.any_open = true;
    auto end = balanced_end(s, open);
    if (end != std::string_view::npos) {
      scan.object = s.substr(open, end - open);
      return scan;
    }
  }
  return scan;
}

inline bool exact_keys(const json& obj, std::initializer_list<std::string_view> keys)
{
  if (obj.size() != keys.size())
    return false;
  for (auto k : keys)
    if (!obj.contains(std::string(k)))
      return false;
  return true;
}

}  // namespace parse_detail

/// First balanced top-level object in the text, preferring the contents of a code fence.
inline ParseOutcome<json> extract_json(std::string_view raw)
{
  using namespace parse_detail;
  Scan scan;
  if (auto fence = fenced_body(raw))
    scan = first_balanced(*fence);
  if (!scan.object)
    scan = first_balanced(raw);
  if (!scan.object)
    return fail(FailureReason::no_object, raw, "no balanced JSON object");
  auto parsed = json::parse(scan.object->begin(), scan.object->end(), nullptr, false);
  if (parsed.is_discarded() || !parsed.is_object())
    return fail(FailureReason::malformed, *scan.object, "object does not parse as JSON");
  return parsed;
}

/// Format 1 verdict for a dimension.
inline ParseOutcome<Verdict> parse_verdict(const json& obj, Dimension dim)
{
  using namespace parse_detail;
  const auto text = obj.dump();
  if (!obj.is_object() || !exact_keys(obj, {"answer", "problem"}))
    return fail(FailureReason::schema, text, "expected exactly the keys answer and problem");

  const auto& a = obj.at("answer");
  std::optional<Answer> answer;
  if (a.is_null())
    answer = Answer::null;
  else if (a.is_string())
    answer = answer_from_string(a.get<std::string>());
  if (!answer)
    return fail(FailureReason::schema, text, "answer must be Yes, No or NULL");

  const auto& p = obj.at("problem");
  ProblemSet problems(dim);
  if (p.is_array()) {
    std::vector<std::string> tokens;
    for (const auto& t : p) {
      if (!t.is_string())
        return fail(FailureReason::schema, text, "problem entries must be strings");
      tokens.push_back(t.get<std::string>());
    }
    try {
      problems = canonicalize_problem_types(dim, tokens);
    } catch (const UnknownProblemType& e) {
      return fail(FailureReason::vocabulary, text, e.what());
    }
  } else if (!(p.is_null() || (p.is_string() && canonical_token(p.get<std::string>()) == "null"))) {
    return fail(FailureReason::schema, text, "problem must be NULL or a list");
  }

  try {
    return Verdict(*answer, problems);
  } catch (const InvalidVerdict& e) {
    return fail(FailureReason::schema, text, e.what());
  }
}

/// Convenience: extract then parse a verdict from raw model text.
inline ParseOutcome<Verdict> parse_verdict_text(std::string_view raw, Dimension dim)
{
  auto obj = extract_json(raw);
  if (!obj)
    return obj.failure();
  return parse_verdict(*obj, dim);
}

/// Single-line Format 1 serialization, e.g. {"answer": "No", "problem": ["blur"]}.
inline std::string format_verdict(const Verdict& v)
{
  std::string s = "{\"answer\": \"";
  s += to_string(v.answer());
  s += "\", \"problem\": ";
  if (v.problems().empty()) {
    s += "\"NULL\"";
  } else {
    s += '[';
    bool first = true;
    for (const auto& t : v.problems().tokens()) {
      if (!first)
        s += ", ";
      s += '"' + t + '"';
      first = false;
    }
    s += ']';
  }
  s += '}';
  return s;
}

struct McAnswer
{
  LetterSet letters;
  bool lenient = false;  // lowercase letters were accepted
};

inline ParseOutcome<McAnswer> parse_mc_answer(const json& obj, std::size_t option_count)
{
  using namespace parse_detail;
  const auto text = obj.dump();
  if (option_count < 2 || option_count > 26)
    return fail(FailureReason::schema, text, "option count must be within [2, 26]");
  if (!obj.is_object() || !exact_keys(obj, {"answer"}))
    return fail(FailureReason::schema, text, "expected exactly the key answer");
  const auto& a = obj.at("answer");
  if (!a.is_array())
    return fail(FailureReason::schema, text, "answer must be a list");
  if (a.empty())
    return fail(FailureReason::schema, text, "answer list is empty");
  McAnswer out;
  for (const auto& item : a) {
    if (!item.is_string())
      return fail(FailureReason::schema, text, "answer entries must be strings");
    auto s = item.get<std::string>();
    if (s.size() != 1 || !std::isalpha(static_cast<unsigned char>(s[0])))
      return fail(FailureReason::schema, text, "answer entries must be single letters");
    char c = s[0];
    if (c >= 'a' && c <= 'z') {
      c = static_cast<char>(c - 'a' + 'A');
      out.lenient = true;
    }
    if (static_cast<std::size_t>(c - 'A') >= option_count)
      return fail(FailureReason::vocabulary, text, std::string("letter ") + c + " is not an option");
    out.letters.insert(c);
  }
  return out;
}

inline ParseOutcome<McAnswer> parse_mc_answer_text(std::string_view raw, std::size_t option_count)
{
  auto obj = extract_json(raw);
  if (!obj)
    return obj.failure();
  return parse_mc_answer(*obj, option_count);
}

/// Format 2 open-ended answer. Not defined for the structure dimension.
inline ParseOutcome<OpenEndedAnswer> parse_open_ended(const json& obj, Dimension dim)
{
  using namespace parse_detail;
  const auto text = obj.dump();
  if (dim == Dimension::structure)
    return fail(FailureReason::schema, text, "open-ended format is not defined for structure");
  if (!obj.is_object() || !exact_keys(obj, {"think", "problem"}))
    return fail(FailureReason::schema, text, "expected exactly the keys think and problem");
  const auto& think = obj.at("think");
  if (!think.is_string() || think.get<std::string>().find_first_not_of(" \t\r\n") == std::string::npos)
    return fail(FailureReason::schema, text, "think must be non-empty text");
  const auto& problem = obj.at("problem");
  if (!problem.is_object())
    return fail(FailureReason::schema, text, "problem must be an object");
  OpenEndedAnswer out{dim, think.get<std::string>(), {}};
  for (auto it = problem.begin(); it != problem.end(); ++it) {
    auto p = ProblemType::find(dim, canonical_token(it.key()));
    if (!p)
      return fail(FailureReason::vocabulary, text, "unknown problem key '" + it.key() + "'");
    if (!it.value().is_string() ||
        it.value().get<std::string>().find_first_not_of(" \t\r\n") == std::string::npos)
      return fail(FailureReason::schema, text, "detail for '" + it.key() + "' must be non-empty text");
    if (out.problems.count(*p))
      return fail(FailureReason::schema, text, "duplicate problem key '" + it.key() + "'");
    out.problems.emplace(*p, it.value().get<std::string>());
  }
  return out;
}

inline ParseOutcome<OpenEndedAnswer> parse_open_ended_text(std::string_view raw, Dimension dim)
{
  auto obj = extract_json(raw);
  if (!obj)
    return obj.failure();
  return parse_open_ended(*obj, dim);
}

inline json failure_to_json(const ParseFailure& f)
{
  return json{{"reason", std::string(to_string(f.reason))}, {"excerpt", f.excerpt}, {"detail", f.detail}};
}

}  // namespace stablei2i
