#pragma once

// Type and Subtype multiple-choice questions built from annotation records.

#include "stablei2i/core.hpp"
#include "stablei2i/detail/rng.hpp"
#include "stablei2i/manifest.hpp"

namespace stablei2i {

inline constexpr std::string_view kNoErrorOption = "No error observed in areas expected to remain unchanged";

namespace mcq_detail {

inline std::string_view issue_adjective(Dimension d)
{
  switch (d) {
    case Dimension::structure: return "structural";
    case Dimension::semantic: return "semantic";
    case Dimension::low_level: return "low-level";
  }
  return "semantic";
}

inline std::string request_clause(const BenchSample& s)
{
  if (s.task_prompt)
    return "Given the request to image edit and Edit instruction is " + *s.task_prompt;
  return "Given the request to image restoration";
}

inline std::string capitalize(std::string s)
{
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z')
    s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

// Option text naming an error of `kind` on `object`.
inline std::string phrase_error(const ProblemType& kind, const std::string& object)
{
  const auto t = kind.token();
  if (t == "add") return "Addition of " + object;
  if (t == "replace") return "Replacement involving " + object;
  if (t == "remove") return "Removal of " + object;
  if (t == "misalignment") return "Misalignment of " + object;
  if (t == "repainting") return "Repainting of " + object;
  return capitalize(std::string(t)) + " in " + object;
}

// Distractor phrasing cycles through fixed templates per dimension.
inline std::string phrase_distractor(Dimension d, const std::string& object, std::size_t i)
{
  if (d == Dimension::semantic) {
    switch (i % 3) {
      case 0: return "Disappearance of " + object;
      case 1: return "Removal of " + object;
      default: return capitalize(object) + " missing";
    }
  }
  const auto vocab = vocabulary(d);
  return phrase_error(*ProblemType::find(d, vocab[i % vocab.size()]), object);
}

inline std::string_view past_participle(const ProblemType& kind)
{
  const auto t = kind.token();
  if (t == "add") return "added";
  if (t == "replace") return "replaced";
  if (t == "remove") return "removed";
  if (t == "misalignment") return "misaligned";
  if (t == "repainting") return "repainted";
  return "degraded";
}

// Shuffles (text, is_correct) pairs into letters.
inline void assign(MCQuestion& q, std::vector<std::pair<std::string, bool>> options, std::uint64_t seed)
{
  detail::Rng rng(seed);
  rng.shuffle(options);
  for (std::size_t i = 0; i < options.size(); ++i) {
    q.options.push_back(std::move(options[i].first));
    if (options[i].second)
      q.correct.insert_index(i);
  }
}

}  // namespace mcq_detail

/// Options are the full dimension vocabulary plus the no-error option, shuffled by seed.
inline MCQuestion build_type_question(const AnnotationRecord& ann, std::uint64_t seed)
{
  using namespace mcq_detail;
  ann.validate();
  const auto& s = ann.sample;
  MCQuestion q;
  q.id = s.id + "/type";
  q.kind = QuestionKind::type;
  q.dimension = s.dimension;
  q.input_image = s.input_image;
  q.output_image = s.output_image;
  q.annotation_ref = s.id;
  q.seed = seed;
  q.stem = "Pick one answer. " + request_clause(s) + ", which types of unintended " +
           std::string(issue_adjective(s.dimension)) + " issues occurred in unchanged regions?";
  std::vector<std::pair<std::string, bool>> options;
  for (auto tok : vocabulary(s.dimension))
    options.emplace_back(std::string(tok), ann.error_types.contains(*ProblemType::find(s.dimension, tok)));
  options.emplace_back(std::string(kNoErrorOption), ann.error_types.empty());
  assign(q, std::move(options), seed);
  q.validate();
  return q;
}

/// Correct options come from the affected objects, distractors from unaffected
/// ones. Returns nullopt when there is nothing to build a distractor from, or
/// when the question would be degenerate.
inline std::optional<MCQuestion> build_subtype_question(const AnnotationRecord& ann, std::uint64_t seed,
                                                        std::size_t n_distractors = 3)
{
  using namespace mcq_detail;
  ann.validate();
  const auto& s = ann.sample;
  if (ann.affected_objects.empty() || ann.unaffected_objects.empty() || n_distractors == 0)
    return std::nullopt;
  if (ann.affected_objects.size() >= 26)
    return std::nullopt;

  detail::Rng rng(detail::splitmix64(seed));
  std::vector<std::pair<std::string, bool>> options;
  for (const auto& a : ann.affected_objects)
    options.emplace_back(phrase_error(a.kind, a.object), true);

  auto pool = ann.unaffected_objects;
  rng.shuffle(pool);
  const std::size_t take =
      std::min({n_distractors, pool.size(), std::size_t{26} - options.size()});
  for (std::size_t i = 0; i < take; ++i)
    options.emplace_back(phrase_distractor(s.dimension, pool[i], i), false);

  // Phrasing collisions would make two letters indistinguishable.
  std::set<std::string> seen;
  for (const auto& o : options)
    if (!seen.insert(o.first).second)
      return std::nullopt;

  MCQuestion q;
  q.id = s.id + "/subtype";
  q.kind = QuestionKind::subtype;
  q.dimension = s.dimension;
  q.input_image = s.input_image;
  q.output_image = s.output_image;
  q.annotation_ref = s.id;
  q.seed = seed;

  std::set<std::string_view> verbs;
  for (const auto& a : ann.affected_objects)
    verbs.insert(past_participle(a.kind));
  const std::string verb = verbs.size() == 1 ? std::string(*verbs.begin()) : "affected";
  q.stem = "Pick one answer. " + request_clause(s) + ", what element was " + verb +
           " even though it should have stayed unchanged in areas expected to remain unchanged?";
  assign(q, std::move(options), seed);
  if (q.correct.size() == q.options.size())
    return std::nullopt;
  q.validate();
  return q;
}

/// Both question kinds for every annotation; seeds derived per annotation index.
inline std::vector<MCQuestion> build_questions(std::span<const AnnotationRecord> anns, std::uint64_t run_seed,
                                               std::size_t n_distractors = 3)
{
  std::vector<MCQuestion> out;
  for (std::size_t i = 0; i < anns.size(); ++i) {
    const auto base = detail::derive_seed(run_seed, i);
    out.push_back(build_type_question(anns[i], detail::derive_seed(base, 0)));
    if (auto q = build_subtype_question(anns[i], detail::derive_seed(base, 1), n_distractors))
      out.push_back(std::move(*q));
  }
  return out;
}

inline json question_to_json(const MCQuestion& q)
{
  json options = json::array();
  for (std::size_t i = 0; i < q.options.size(); ++i)
    options.push_back({{"letter", std::string(1, q.letter(i))}, {"text", q.options[i]}});
  json correct = json::array();
  for (char c : q.correct.letters())
    correct.push_back(std::string(1, c));
  return json{{"id", q.id},
              {"kind", std::string(to_string(q.kind))},
              {"dimension", std::string(to_string(q.dimension))},
              {"input_image", q.input_image.generic_string()},
              {"output_image", q.output_image.generic_string()},
              {"stem", q.stem},
              {"options", options},
              {"correct", correct},
              {"provenance", {{"annotation", q.annotation_ref}, {"seed", q.seed}}}};
}

inline MCQuestion question_from_json(const json& j, const std::filesystem::path& base = {},
                                     const ManifestOptions& opts = {})
{
  MCQuestion q;
  q.id = manifest_detail::require_string(j, "id");
  const auto kind = manifest_detail::require_string(j, "kind");
  if (kind == "type")
    q.kind = QuestionKind::type;
  else if (kind == "subtype")
    q.kind = QuestionKind::subtype;
  else
    throw SchemaError("unknown question kind '" + kind + "'");
  auto dim = dimension_from_string(manifest_detail::require_string(j, "dimension"));
  if (!dim)
    throw SchemaError("unknown dimension in question " + q.id);
  q.dimension = *dim;
  q.input_image = manifest_detail::resolve_image(base, manifest_detail::require_string(j, "input_image"),
                                                 opts.check_images);
  q.output_image = manifest_detail::resolve_image(base, manifest_detail::require_string(j, "output_image"),
                                                  opts.check_images);
  q.stem = manifest_detail::require_string(j, "stem");
  const auto& options = j.at("options");
  if (!options.is_array())
    throw SchemaError("options must be a list");
  for (std::size_t i = 0; i < options.size(); ++i) {
    const auto& o = options[i];
    if (o.at("letter").get<std::string>() != std::string(1, q.letter(i)))
      throw SchemaError("option letters must run consecutively from A");
    q.options.push_back(o.at("text").get<std::string>());
  }
  for (const auto& c : j.at("correct")) {
    const auto s = c.get<std::string>();
    if (s.size() != 1)
      throw SchemaError("correct entries must be single letters");
    q.correct.insert(s[0]);
  }
  if (j.contains("provenance")) {
    q.annotation_ref = j["provenance"].value("annotation", "");
    q.seed = j["provenance"].value("seed", std::uint64_t{0});
  }
  try {
    q.validate();
  } catch (const SchemaError&) {
    throw;
  } catch (const Error& e) {
    throw SchemaError(e.what());
  }
  return q;
}

inline std::vector<MCQuestion> load_question_manifest(const std::filesystem::path& file,
                                                      const ManifestOptions& opts = {})
{
  std::vector<MCQuestion> out;
  std::set<std::string> ids;
  manifest_detail::read_lines(file, [&](const json& row) {
    auto q = question_from_json(row, file.parent_path(), opts);
    if (!ids.insert(q.id).second)
      throw SchemaError("duplicate question id '" + q.id + "'");
    out.push_back(std::move(q));
  });
  return out;
}

}  // namespace stablei2i
