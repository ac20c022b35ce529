#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace stablei2i {

class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

enum class Dimension : std::uint8_t { structure, semantic, low_level };

inline constexpr std::array<Dimension, 3> kAllDimensions{
    Dimension::structure, Dimension::semantic, Dimension::low_level};

inline constexpr std::size_t index_of(Dimension d) { return static_cast<std::size_t>(d); }

inline std::string_view to_string(Dimension d)
{
  switch (d) {
    case Dimension::structure: return "structure";
    case Dimension::semantic: return "semantic";
    case Dimension::low_level: return "low_level";
  }
  return "structure";
}

/// Column heading used in report tables.
inline std::string_view display_name(Dimension d)
{
  switch (d) {
    case Dimension::structure: return "Structure";
    case Dimension::semantic: return "Semantic";
    case Dimension::low_level: return "Low-level";
  }
  return "Structure";
}

inline std::optional<Dimension> dimension_from_string(std::string_view s)
{
  for (auto d : kAllDimensions)
    if (to_string(d) == s)
      return d;
  return std::nullopt;
}

namespace detail {
inline constexpr std::array<std::string_view, 2> kStructureVocab{"misalignment", "repainting"};
inline constexpr std::array<std::string_view, 3> kSemanticVocab{"add", "replace", "remove"};
inline constexpr std::array<std::string_view, 5> kLowLevelVocab{
    "noise", "blur", "color cast", "exposure degradation", "artifact"};
}  // namespace detail

/// Closed problem-type vocabulary of a dimension, in template order.
inline std::span<const std::string_view> vocabulary(Dimension d)
{
  switch (d) {
    case Dimension::structure: return detail::kStructureVocab;
    case Dimension::semantic: return detail::kSemanticVocab;
    case Dimension::low_level: return detail::kLowLevelVocab;
  }
  return {};
}

class UnknownProblemType : public Error
{
public:
  UnknownProblemType(std::string token, Dimension dim)
      : Error("unknown problem type '" + token + "' for dimension " + std::string(to_string(dim))),
        token_(std::move(token)), dimension_(dim)
  {
  }
  const std::string& token() const { return token_; }
  Dimension dimension() const { return dimension_; }

private:
  std::string token_;
  Dimension dimension_;
};

/// A vocabulary entry scoped to its owning dimension.
class ProblemType
{
public:
  static std::optional<ProblemType> find(Dimension d, std::string_view canonical)
  {
    auto vocab = vocabulary(d);
    for (std::size_t i = 0; i < vocab.size(); ++i)
      if (vocab[i] == canonical)
        return ProblemType(d, static_cast<std::uint8_t>(i));
    return std::nullopt;
  }

  static ProblemType at(Dimension d, std::size_t index)
  {
    if (index >= vocabulary(d).size())
      throw Error("problem type index out of range");
    return ProblemType(d, static_cast<std::uint8_t>(index));
  }

  Dimension dimension() const { return dim_; }
  std::size_t index() const { return index_; }
  std::string_view token() const { return vocabulary(dim_)[index_]; }

  auto operator<=>(const ProblemType&) const = default;

private:
  ProblemType(Dimension d, std::uint8_t i) : dim_(d), index_(i) {}
  Dimension dim_;
  std::uint8_t index_;
};

/// Set of problem types of one dimension, stored as a bitmask over the vocabulary.
class ProblemSet
{
public:
  explicit ProblemSet(Dimension d, std::uint32_t bits = 0) : dim_(d), bits_(bits)
  {
    if (bits_ >> vocabulary(d).size())
      throw Error("problem set bits outside the vocabulary of " + std::string(to_string(d)));
  }

  static ProblemSet full(Dimension d)
  {
    return ProblemSet(d, (1u << vocabulary(d).size()) - 1u);
  }

  Dimension dimension() const { return dim_; }
  std::uint32_t bits() const { return bits_; }
  std::size_t size() const { return static_cast<std::size_t>(std::popcount(bits_)); }
  bool empty() const { return bits_ == 0; }

  void insert(ProblemType p)
  {
    if (p.dimension() != dim_)
      throw Error("problem type '" + std::string(p.token()) + "' does not belong to " +
                  std::string(to_string(dim_)));
    bits_ |= 1u << p.index();
  }

  bool contains(ProblemType p) const
  {
    return p.dimension() == dim_ && (bits_ >> p.index()) & 1u;
  }

  std::size_t intersection_size(const ProblemSet& other) const
  {
    return static_cast<std::size_t>(std::popcount(bits_ & other.bits_));
  }

  /// |this \ other|
  std::size_t difference_size(const ProblemSet& other) const
  {
    return static_cast<std::size_t>(std::popcount(bits_ & ~other.bits_));
  }

  bool is_subset_of(const ProblemSet& other) const { return (bits_ & ~other.bits_) == 0; }

  std::vector<ProblemType> members() const
  {
    std::vector<ProblemType> out;
    for (std::size_t i = 0; i < vocabulary(dim_).size(); ++i)
      if ((bits_ >> i) & 1u)
        out.push_back(ProblemType::at(dim_, i));
    return out;
  }

  std::vector<std::string> tokens() const
  {
    std::vector<std::string> out;
    for (auto p : members())
      out.emplace_back(p.token());
    return out;
  }

  bool operator==(const ProblemSet&) const = default;

private:
  Dimension dim_;
  std::uint32_t bits_;
};

/// Lowercase, trim, collapse inner whitespace runs to a single space.
inline std::string canonical_token(std::string_view raw)
{
  std::string out;
  bool pending_space = false;
  for (unsigned char c : raw) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

/// Maps a messy token list from a model response onto the dimension vocabulary.
/// Throws UnknownProblemType on the first token that matches nothing.
inline ProblemSet canonicalize_problem_types(Dimension d, std::span<const std::string> raw)
{
  ProblemSet set(d);
  for (const auto& token : raw) {
    auto canonical = canonical_token(token);
    auto p = ProblemType::find(d, canonical);
    if (!p)
      throw UnknownProblemType(token, d);
    set.insert(*p);
  }
  return set;
}

inline ProblemSet canonicalize_problem_types(Dimension d, std::initializer_list<std::string> raw)
{
  return canonicalize_problem_types(d, std::span<const std::string>(raw.begin(), raw.size()));
}

enum class Answer : std::uint8_t { yes, no, null };

inline std::string_view to_string(Answer a)
{
  switch (a) {
    case Answer::yes: return "Yes";
    case Answer::no: return "No";
    case Answer::null: return "NULL";
  }
  return "NULL";
}

inline std::optional<Answer> answer_from_string(std::string_view s)
{
  auto c = canonical_token(s);
  if (c == "yes") return Answer::yes;
  if (c == "no") return Answer::no;
  if (c == "null") return Answer::null;
  return std::nullopt;
}

class InvalidVerdict : public Error
{
public:
  using Error::Error;
};

/// A fidelity judgment: answer flag plus problem types.
///
/// Yes and NULL carry no problems, No carries at least one. NULL (the
/// "ignored" case) exists only for the low-level dimension.
class Verdict
{
public:
  Verdict(Answer answer, ProblemSet problems) : answer_(answer), problems_(problems)
  {
    switch (answer_) {
      case Answer::yes:
        if (!problems_.empty())
          throw InvalidVerdict("Yes verdict must not list problems");
        break;
      case Answer::no:
        if (problems_.empty())
          throw InvalidVerdict("No verdict must list at least one problem");
        break;
      case Answer::null:
        if (!problems_.empty())
          throw InvalidVerdict("NULL verdict must not list problems");
        if (problems_.dimension() != Dimension::low_level)
          throw InvalidVerdict("NULL verdict is only defined for low_level");
        break;
    }
  }

  static Verdict yes(Dimension d) { return Verdict(Answer::yes, ProblemSet(d)); }
  static Verdict ignored() { return Verdict(Answer::null, ProblemSet(Dimension::low_level)); }
  static Verdict no(ProblemSet problems) { return Verdict(Answer::no, problems); }

  Answer answer() const { return answer_; }
  const ProblemSet& problems() const { return problems_; }
  Dimension dimension() const { return problems_.dimension(); }

  bool operator==(const Verdict&) const = default;

private:
  Answer answer_;
  ProblemSet problems_;
};

enum class MatchMode { binary, strict };

inline bool verdict_matches(const Verdict& gt, const Verdict& pred, MatchMode mode)
{
  if (gt.answer() != pred.answer())
    return false;
  if (mode == MatchMode::binary)
    return true;
  return gt.problems().bits() == pred.problems().bits();
}

/// One evaluation unit. An absent task prompt is the NULL marker (identity expected).
struct BenchSample
{
  std::string id;
  std::filesystem::path input_image;
  std::filesystem::path output_image;
  std::optional<std::string> task_prompt;
  Dimension dimension;
  Verdict gt;
};

/// An image pair to be judged without ground truth.
struct PairSample
{
  std::string id;
  std::filesystem::path input_image;
  std::filesystem::path output_image;
  std::optional<std::string> task_prompt;
};

struct AffectedObject
{
  std::string object;
  ProblemType kind;
};

struct AnnotationRecord
{
  BenchSample sample;
  ProblemSet error_types;
  std::vector<AffectedObject> affected_objects;
  std::vector<std::string> unaffected_objects;
  int severity = 1;

  /// Throws Error when the record violates its invariants.
  void validate() const
  {
    if (error_types.dimension() != sample.dimension)
      throw Error("annotation " + sample.id + ": error types belong to another dimension");
    if (error_types.empty() != affected_objects.empty())
      throw Error("annotation " + sample.id +
                  ": affected_objects must be non-empty exactly when error_types is");
    for (const auto& a : affected_objects)
      if (a.kind.dimension() != sample.dimension)
        throw Error("annotation " + sample.id + ": affected object kind outside dimension");
    if (severity < 1 || severity > 3)
      throw Error("annotation " + sample.id + ": severity must be 1, 2 or 3");
  }
};

struct OpenEndedAnswer
{
  Dimension dimension;
  std::string think;
  std::map<ProblemType, std::string> problems;
};

/// Bitmask over option letters A..Z.
class LetterSet
{
public:
  constexpr LetterSet() = default;
  constexpr explicit LetterSet(std::uint32_t bits) : bits_(bits & 0x3ffffffu) {}

  static LetterSet of(std::string_view letters)
  {
    LetterSet s;
    for (char c : letters)
      s.insert(c);
    return s;
  }

  void insert(char letter)
  {
    if (letter < 'A' || letter > 'Z')
      throw Error(std::string("option letter out of range: ") + letter);
    bits_ |= 1u << (letter - 'A');
  }
  void insert_index(std::size_t i) { bits_ |= 1u << i; }
  bool contains(char letter) const { return letter >= 'A' && letter <= 'Z' && (bits_ >> (letter - 'A')) & 1u; }
  bool contains_index(std::size_t i) const { return (bits_ >> i) & 1u; }

  std::uint32_t bits() const { return bits_; }
  std::size_t size() const { return static_cast<std::size_t>(std::popcount(bits_)); }
  bool empty() const { return bits_ == 0; }
  bool is_subset_of(LetterSet other) const { return (bits_ & ~other.bits_) == 0; }

  std::string letters() const
  {
    std::string s;
    for (int i = 0; i < 26; ++i)
      if ((bits_ >> i) & 1u)
        s.push_back(static_cast<char>('A' + i));
    return s;
  }

  bool operator==(const LetterSet&) const = default;

private:
  std::uint32_t bits_ = 0;
};

enum class QuestionKind { type, subtype };

inline std::string_view to_string(QuestionKind k)
{
  return k == QuestionKind::type ? "type" : "subtype";
}

/// Multiple-choice item. Option i carries letter 'A' + i.
struct MCQuestion
{
  std::string id;
  std::string stem;
  std::vector<std::string> options;
  LetterSet correct;
  QuestionKind kind = QuestionKind::type;
  Dimension dimension = Dimension::structure;
  std::filesystem::path input_image;
  std::filesystem::path output_image;
  std::string annotation_ref;
  std::uint64_t seed = 0;

  char letter(std::size_t i) const { return static_cast<char>('A' + i); }

  void validate() const
  {
    if (options.size() < 2 || options.size() > 26)
      throw Error("question " + id + ": needs between 2 and 26 options");
    if (correct.empty())
      throw Error("question " + id + ": correct set is empty");
    if (correct.bits() >> options.size())
      throw Error("question " + id + ": correct letter outside the options");
  }
};

}  // namespace stablei2i
