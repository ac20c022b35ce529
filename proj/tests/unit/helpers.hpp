#pragma once

#include "stablei2i/stablei2i.hpp"

#include <gtest/gtest.h>

#include <random>

#include <unistd.h>

namespace testutil {

using namespace stablei2i;
namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir
{
public:
  TempDir()
  {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("stablei2i_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir()
  {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

private:
  fs::path path_;
};

/// Smooth gradient with a checker overlay; enough texture for crops and blur to matter.
inline Image pattern_image(std::size_t w, std::size_t h, std::uint32_t salt = 0)
{
  Image img(w, h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const bool check = ((x / 8) + (y / 8) + salt) % 2 == 0;
      img.at(x, y, 0) = static_cast<std::uint8_t>((x * 255) / std::max<std::size_t>(w - 1, 1));
      img.at(x, y, 1) = static_cast<std::uint8_t>((y * 255) / std::max<std::size_t>(h - 1, 1));
      img.at(x, y, 2) = static_cast<std::uint8_t>(check ? 200 : 60);
    }
  return img;
}

inline ProblemSet ps(Dimension d, std::initializer_list<std::string> tokens)
{
  return canonicalize_problem_types(d, tokens);
}

inline Verdict no(Dimension d, std::initializer_list<std::string> tokens) { return Verdict::no(ps(d, tokens)); }

/// Every constructible verdict of a dimension.
inline std::vector<Verdict> all_verdicts(Dimension d)
{
  std::vector<Verdict> out{Verdict::yes(d)};
  if (d == Dimension::low_level)
    out.push_back(Verdict::ignored());
  const auto n = vocabulary(d).size();
  for (std::uint32_t bits = 1; bits < (1u << n); ++bits)
    out.push_back(Verdict::no(ProblemSet(d, bits)));
  return out;
}

inline void write_file(const fs::path& p, const std::string& text)
{
  write_binary_file(p, text);
}

inline std::string read_file(const fs::path& p) { return read_binary_file(p); }

}  // namespace testutil
