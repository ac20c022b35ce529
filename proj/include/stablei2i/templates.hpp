#pragma once

#include "stablei2i/core.hpp"
#include "stablei2i/detail/digest.hpp"

#include <fstream>
#include <sstream>

#ifndef STABLEI2I_TEMPLATE_DIR
#define STABLEI2I_TEMPLATE_DIR "templates"
#endif

namespace stablei2i {

enum class Flavor { bench, train_f1, train_f2, mcq };

inline std::string_view to_string(Flavor f)
{
  switch (f) {
    case Flavor::bench: return "bench";
    case Flavor::train_f1: return "train_f1";
    case Flavor::train_f2: return "train_f2";
    case Flavor::mcq: return "mcq";
  }
  return "bench";
}

inline std::optional<Flavor> flavor_from_string(std::string_view s)
{
  for (auto f : {Flavor::bench, Flavor::train_f1, Flavor::train_f2, Flavor::mcq})
    if (to_string(f) == s)
      return f;
  return std::nullopt;
}

class MissingTemplate : public Error
{
public:
  using Error::Error;
};

class UnsupportedDimension : public Error
{
public:
  using Error::Error;
};

class TooFewOptions : public Error
{
public:
  using Error::Error;
};

inline constexpr std::string_view kImageSlot = "<image>";
inline constexpr std::string_view kTaskPromptSlot = "<TASK_PROMPT>";
inline constexpr std::string_view kTypesSlot = "<TYPES_FROM_FORMAT_1_RESULT>";
inline constexpr std::string_view kQuestionSlot = "<QUESTION>";
inline constexpr std::string_view kOptionsSlot = "<OPTIONS>";

struct PromptTemplate
{
  std::string template_id;  // "<flavor>/<dimension>"
  std::optional<Dimension> dimension;
  Flavor flavor;
  std::string body;
  std::string fingerprint;  // sha256 of the resource file bytes
};

struct RenderedPrompt
{
  std::string text;
  std::array<std::filesystem::path, 2> image_refs;  // input, output
  std::string template_id;
  std::string template_fingerprint;
  std::string fingerprint;
};

/// Replaces each placeholder in a single left-to-right pass; substituted text is never rescanned.
inline std::string substitute(std::string_view body,
                              const std::vector<std::pair<std::string_view, std::string>>& values)
{
  std::string out;
  std::size_t pos = 0;
  while (pos < body.size()) {
    bool replaced = false;
    if (body[pos] == '<') {
      for (const auto& [slot, value] : values) {
        if (body.compare(pos, slot.size(), slot) == 0) {
          out += value;
          pos += slot.size();
          replaced = true;
          break;
        }
      }
    }
    if (!replaced)
      out.push_back(body[pos++]);
  }
  return out;
}

/// Read-only set of prompt templates loaded from templates/<flavor>/<dimension>.txt.
class TemplateStore
{
public:
  static std::filesystem::path default_directory() { return STABLEI2I_TEMPLATE_DIR; }

  static TemplateStore load(const std::filesystem::path& dir = default_directory())
  {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir))
      throw MissingTemplate("template directory not found: " + dir.string());
    TemplateStore store;
    store.dir_ = dir;
    if (std::ifstream v(dir / "VERSION"); v)
      std::getline(v, store.version_);
    for (auto flavor : {Flavor::bench, Flavor::train_f1, Flavor::train_f2, Flavor::mcq}) {
      auto sub = dir / std::string(to_string(flavor));
      if (!fs::is_directory(sub))
        continue;
      std::vector<fs::path> files;
      for (const auto& entry : fs::directory_iterator(sub))
        if (entry.is_regular_file() && entry.path().extension() == ".txt")
          files.push_back(entry.path());
      std::sort(files.begin(), files.end());
      for (const auto& file : files) {
        auto stem = file.stem().string();
        auto dim = dimension_from_string(stem);
        if (!dim && flavor != Flavor::mcq)
          throw Error("template " + file.string() + ": file name is not a dimension");
        store.add(flavor, dim, read_file(file));
      }
    }
    return store;
  }

  /// Registers a template from text. Used by load() and by tests that build stores in memory.
  void add(Flavor flavor, std::optional<Dimension> dim, std::string content)
  {
    PromptTemplate t;
    t.flavor = flavor;
    t.dimension = dim;
    t.template_id = make_id(flavor, dim);
    t.fingerprint = detail::sha256_hex(content);
    if (!content.empty() && content.back() == '\n')
      content.pop_back();
    validate_body(t.template_id, content);
    t.body = std::move(content);
    templates_[t.template_id] = std::move(t);
  }

  const PromptTemplate& get(Flavor flavor, std::optional<Dimension> dim) const
  {
    auto id = make_id(flavor, dim);
    auto it = templates_.find(id);
    if (it == templates_.end())
      throw MissingTemplate("no template " + id);
    return it->second;
  }

  bool has(Flavor flavor, std::optional<Dimension> dim) const
  {
    return templates_.count(make_id(flavor, dim)) != 0;
  }

  /// template_id -> fingerprint, for run metadata.
  std::map<std::string, std::string> fingerprints() const
  {
    std::map<std::string, std::string> out;
    for (const auto& [id, t] : templates_)
      out[id] = t.fingerprint;
    return out;
  }

  const std::string& version() const { return version_; }
  const std::filesystem::path& directory() const { return dir_; }

  static std::string make_id(Flavor flavor, std::optional<Dimension> dim)
  {
    return std::string(to_string(flavor)) + "/" + (dim ? std::string(to_string(*dim)) : "common");
  }

private:
  static std::string read_file(const std::filesystem::path& file)
  {
    std::ifstream in(file, std::ios::binary);
    if (!in)
      throw MissingTemplate("cannot read template " + file.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  // Exactly two image slots, on the first two lines, ahead of any instruction text.
  static void validate_body(const std::string& id, std::string_view body)
  {
    std::size_t count = 0;
    std::vector<std::size_t> at;
    for (auto pos = body.find(kImageSlot); pos != std::string_view::npos;
         pos = body.find(kImageSlot, pos + 1)) {
      ++count;
      at.push_back(pos);
    }
    if (count != 2)
      throw Error("template " + id + ": expected exactly two image slots, found " +
                  std::to_string(count));
    auto first_nl = body.find('\n');
    auto second_nl = first_nl == std::string_view::npos ? first_nl : body.find('\n', first_nl + 1);
    if (at[0] > first_nl || at[1] < first_nl || at[1] > second_nl)
      throw Error("template " + id + ": image slots must occupy the first two lines");
  }

  std::map<std::string, PromptTemplate> templates_;
  std::filesystem::path dir_;
  std::string version_;
};

namespace template_detail {

inline RenderedPrompt finish(const PromptTemplate& t,
                             const std::vector<std::pair<std::string_view, std::string>>& values,
                             const std::filesystem::path& input, const std::filesystem::path& output)
{
  RenderedPrompt r;
  r.text = substitute(t.body, values);
  r.image_refs = {input, output};
  r.template_id = t.template_id;
  r.template_fingerprint = t.fingerprint;
  detail::Sha256 h;
  h.field(t.template_id).field(t.body);
  for (const auto& [slot, value] : values)
    h.field(slot).field(value);
  r.fingerprint = h.hex();
  return r;
}

inline std::string task_prompt_text(const std::optional<std::string>& p)
{
  return p ? *p : std::string("NULL");
}

}  // namespace template_detail

inline RenderedPrompt render_bench_prompt(const TemplateStore& store, const BenchSample& sample)
{
  const auto& t = store.get(Flavor::bench, sample.dimension);
  return template_detail::finish(
      t, {{kTaskPromptSlot, template_detail::task_prompt_text(sample.task_prompt)}},
      sample.input_image, sample.output_image);
}

/// Training-format prompt. Format 2 needs the known problem types and excludes structure.
inline RenderedPrompt render_train_prompt(const TemplateStore& store, const BenchSample& sample,
                                          Flavor flavor, const ProblemSet& types)
{
  if (flavor != Flavor::train_f1 && flavor != Flavor::train_f2)
    throw Error("render_train_prompt: flavor must be train_f1 or train_f2");
  if (flavor == Flavor::train_f2) {
    if (sample.dimension == Dimension::structure)
      throw UnsupportedDimension("open-ended format is not defined for the structure dimension");
    if (types.empty())
      throw Error("open-ended format requires at least one known problem type");
    if (types.dimension() != sample.dimension)
      throw Error("problem types belong to another dimension");
  }
  const auto& t = store.get(flavor, sample.dimension);
  std::vector<std::pair<std::string_view, std::string>> values{
      {kTaskPromptSlot, template_detail::task_prompt_text(sample.task_prompt)}};
  if (flavor == Flavor::train_f2) {
    std::string joined;
    for (const auto& tok : types.tokens())
      joined += (joined.empty() ? "" : ", ") + tok;
    values.emplace_back(kTypesSlot, joined);
  }
  return template_detail::finish(t, values, sample.input_image, sample.output_image);
}

inline RenderedPrompt render_mcq_prompt(const TemplateStore& store, const MCQuestion& q)
{
  if (q.options.size() < 2)
    throw TooFewOptions("question " + q.id + " has fewer than two options");
  if (q.options.size() > 26)
    throw Error("question " + q.id + " has more than 26 options");
  std::string options;
  for (std::size_t i = 0; i < q.options.size(); ++i) {
    if (i)
      options.push_back('\n');
    options += q.letter(i);
    options += ". ";
    options += q.options[i];
  }
  const auto& t = store.get(Flavor::mcq, std::nullopt);
  return template_detail::finish(t, {{kQuestionSlot, q.stem}, {kOptionsSlot, options}},
                                 q.input_image, q.output_image);
}

}  // namespace stablei2i
