#pragma once

// Line-delimited manifest IO for bench samples, image pairs and annotations.

#include "stablei2i/core.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace stablei2i {

using json = nlohmann::json;

class SchemaError : public Error
{
public:
  using Error::Error;
};

/// `gt_problem` style field: "NULL", null or [] mean no problems.
inline ProblemSet problems_from_json(Dimension d, const json& field)
{
  if (field.is_null())
    return ProblemSet(d);
  if (field.is_string()) {
    if (canonical_token(field.get<std::string>()) == "null")
      return ProblemSet(d);
    throw SchemaError("problem field must be \"NULL\" or a list");
  }
  if (!field.is_array())
    throw SchemaError("problem field must be \"NULL\" or a list");
  std::vector<std::string> tokens;
  for (const auto& t : field) {
    if (!t.is_string())
      throw SchemaError("problem list entries must be strings");
    tokens.push_back(t.get<std::string>());
  }
  return canonicalize_problem_types(d, tokens);
}

inline json problems_to_json(const ProblemSet& p)
{
  if (p.empty())
    return "NULL";
  return p.tokens();
}

/// Format 1 object: {"answer": ..., "problem": ...}.
inline json verdict_to_json(const Verdict& v)
{
  json j;
  j["answer"] = std::string(to_string(v.answer()));
  j["problem"] = problems_to_json(v.problems());
  return j;
}

inline Verdict verdict_from_fields(Dimension d, const json& answer, const json& problem)
{
  if (!answer.is_string())
    throw SchemaError("answer must be a string");
  auto a = answer_from_string(answer.get<std::string>());
  if (!a)
    throw SchemaError("answer must be Yes, No or NULL");
  try {
    return Verdict(*a, problems_from_json(d, problem));
  } catch (const InvalidVerdict& e) {
    throw SchemaError(e.what());
  }
}

namespace manifest_detail {

inline void require_exact_keys(const json& row, const std::set<std::string>& keys)
{
  if (!row.is_object())
    throw SchemaError("record is not an object");
  for (const auto& k : keys)
    if (!row.contains(k))
      throw SchemaError("missing field '" + k + "'");
  for (auto it = row.begin(); it != row.end(); ++it)
    if (!keys.count(it.key()))
      throw SchemaError("unexpected field '" + it.key() + "'");
}

inline std::string require_string(const json& row, const char* key)
{
  const auto& v = row.at(key);
  if (!v.is_string())
    throw SchemaError(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

inline std::optional<std::string> task_prompt_from_json(const json& v)
{
  if (v.is_null())
    return std::nullopt;
  if (!v.is_string())
    throw SchemaError("task_prompt must be a string or null");
  auto s = v.get<std::string>();
  if (s == "NULL")
    return std::nullopt;
  return s;
}

inline std::filesystem::path resolve_image(const std::filesystem::path& base, const std::string& p,
                                           bool check)
{
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty())
    path = base / path;
  if (check && !std::filesystem::is_regular_file(path))
    throw SchemaError("image not found: " + path.string());
  return path;
}

template <class F>
auto read_lines(const std::filesystem::path& file, F&& per_row)
{
  std::ifstream in(file);
  if (!in)
    throw SchemaError("cannot open manifest " + file.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    try {
      auto row = json::parse(line);
      per_row(row);
    } catch (const json::exception& e) {
      throw SchemaError(file.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw SchemaError(file.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

}  // namespace manifest_detail

struct ManifestOptions
{
  bool check_images = true;
};

inline const std::set<std::string>& bench_fields()
{
  static const std::set<std::string> keys{"id",        "input_image", "output_image", "task_prompt",
                                          "dimension", "gt_answer",   "gt_problem"};
  return keys;
}

inline BenchSample bench_sample_from_json(const json& row, const std::filesystem::path& base,
                                          ManifestOptions opts, bool exact_keys = true)
{
  using namespace manifest_detail;
  if (exact_keys)
    require_exact_keys(row, bench_fields());
  else
    for (const auto& k : bench_fields())
      if (!row.contains(k))
        throw SchemaError("missing field '" + k + "'");
  auto dim_token = require_string(row, "dimension");
  auto dim = dimension_from_string(dim_token);
  if (!dim)
    throw SchemaError("unknown dimension '" + dim_token + "'");
  return BenchSample{require_string(row, "id"),
                     resolve_image(base, require_string(row, "input_image"), opts.check_images),
                     resolve_image(base, require_string(row, "output_image"), opts.check_images),
                     task_prompt_from_json(row.at("task_prompt")),
                     *dim,
                     verdict_from_fields(*dim, row.at("gt_answer"), row.at("gt_problem"))};
}

inline json bench_sample_to_json(const BenchSample& s)
{
  json j;
  j["id"] = s.id;
  j["input_image"] = s.input_image.generic_string();
  j["output_image"] = s.output_image.generic_string();
  j["task_prompt"] = s.task_prompt ? json(*s.task_prompt) : json("NULL");
  j["dimension"] = std::string(to_string(s.dimension));
  j["gt_answer"] = std::string(to_string(s.gt.answer()));
  j["gt_problem"] = problems_to_json(s.gt.problems());
  return j;
}

/// Loads a bench manifest; relative image paths resolve against the manifest's directory.
inline std::vector<BenchSample> load_bench_manifest(const std::filesystem::path& file,
                                                    ManifestOptions opts = {})
{
  std::vector<BenchSample> out;
  std::set<std::string> ids;
  manifest_detail::read_lines(file, [&](const json& row) {
    auto s = bench_sample_from_json(row, file.parent_path(), opts);
    if (!ids.insert(s.id).second)
      throw SchemaError("duplicate id '" + s.id + "'");
    out.push_back(std::move(s));
  });
  return out;
}

inline std::vector<PairSample> load_pairs_manifest(const std::filesystem::path& file,
                                                   ManifestOptions opts = {})
{
  using namespace manifest_detail;
  static const std::set<std::string> keys{"id", "input_image", "output_image", "task_prompt"};
  std::vector<PairSample> out;
  std::set<std::string> ids;
  read_lines(file, [&](const json& row) {
    require_exact_keys(row, keys);
    PairSample p{require_string(row, "id"),
                 resolve_image(file.parent_path(), require_string(row, "input_image"), opts.check_images),
                 resolve_image(file.parent_path(), require_string(row, "output_image"), opts.check_images),
                 task_prompt_from_json(row.at("task_prompt"))};
    if (!ids.insert(p.id).second)
      throw SchemaError("duplicate id '" + p.id + "'");
    out.push_back(std::move(p));
  });
  return out;
}

inline AnnotationRecord annotation_from_json(const json& row, const std::filesystem::path& base,
                                             ManifestOptions opts)
{
  using namespace manifest_detail;
  auto keys = bench_fields();
  keys.insert({"error_types", "affected_objects", "unaffected_objects", "severity"});
  require_exact_keys(row, keys);
  auto sample = bench_sample_from_json(row, base, opts, false);
  const auto dim = sample.dimension;

  auto error_types = problems_from_json(dim, row.at("error_types"));

  std::vector<AffectedObject> affected;
  const auto& aff = row.at("affected_objects");
  if (!aff.is_array())
    throw SchemaError("affected_objects must be a list");
  for (const auto& a : aff) {
    require_exact_keys(a, {"object", "error"});
    auto kind = ProblemType::find(dim, canonical_token(require_string(a, "error")));
    if (!kind)
      throw UnknownProblemType(require_string(a, "error"), dim);
    affected.push_back({require_string(a, "object"), *kind});
  }

  std::vector<std::string> unaffected;
  const auto& un = row.at("unaffected_objects");
  if (!un.is_array())
    throw SchemaError("unaffected_objects must be a list");
  for (const auto& u : un) {
    if (!u.is_string())
      throw SchemaError("unaffected_objects entries must be strings");
    unaffected.push_back(u.get<std::string>());
  }

  const auto& sev = row.at("severity");
  if (!sev.is_number_integer())
    throw SchemaError("severity must be an integer");

  AnnotationRecord rec{std::move(sample), error_types, std::move(affected), std::move(unaffected),
                       sev.get<int>()};
  try {
    rec.validate();
  } catch (const SchemaError&) {
    throw;
  } catch (const Error& e) {
    throw SchemaError(e.what());
  }
  return rec;
}

inline std::vector<AnnotationRecord> load_annotation_manifest(const std::filesystem::path& file,
                                                              ManifestOptions opts = {})
{
  std::vector<AnnotationRecord> out;
  std::set<std::string> ids;
  manifest_detail::read_lines(file, [&](const json& row) {
    auto rec = annotation_from_json(row, file.parent_path(), opts);
    if (!ids.insert(rec.sample.id).second)
      throw SchemaError("duplicate id '" + rec.sample.id + "'");
    out.push_back(std::move(rec));
  });
  return out;
}

/// Writes one JSON object per line.
inline void write_jsonl(const std::filesystem::path& file, const std::vector<json>& rows)
{
  if (file.has_parent_path())
    std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out)
    throw Error("cannot write " + file.string());
  for (const auto& r : rows)
    out << r.dump() << '\n';
}

}  // namespace stablei2i
