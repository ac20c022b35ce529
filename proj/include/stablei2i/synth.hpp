#pragma once

// Deterministic synthesis of labeled training pairs: size cap, texture-aware
// crop pairs and a classical degradation chain with automatic labels.
//
// All pixel arithmetic is integer or fixed point and all randomness comes
// from detail::Rng, so a (image, seed, parameters) triple regenerates the
// same bytes on every platform.

#include "stablei2i/core.hpp"
#include "stablei2i/detail/rng.hpp"
#include "stablei2i/image.hpp"
#include "stablei2i/manifest.hpp"

#include <cmath>
#include <limits>
#include <variant>

namespace stablei2i {

inline constexpr std::size_t kMaxSide = 1344;

namespace synth_detail {

inline std::uint8_t clamp_u8(std::int64_t v)
{
  return static_cast<std::uint8_t>(v < 0 ? 0 : (v > 255 ? 255 : v));
}

// Area-average resampling along one axis. Source cell i spans [i*dst, (i+1)*dst),
// destination cell x spans [x*src, (x+1)*src) on a common integer grid.
inline std::vector<std::uint32_t> area_weights_row(std::size_t src, std::size_t dst, std::size_t x,
                                                   std::size_t& first)
{
  const std::uint64_t lo = static_cast<std::uint64_t>(x) * src;
  const std::uint64_t hi = lo + src;
  first = static_cast<std::size_t>(lo / dst);
  std::vector<std::uint32_t> w;
  for (std::size_t i = first; i < src; ++i) {
    const std::uint64_t cell_lo = static_cast<std::uint64_t>(i) * dst;
    const std::uint64_t cell_hi = cell_lo + dst;
    if (cell_lo >= hi)
      break;
    const std::uint64_t overlap = std::min(hi, cell_hi) - std::max(lo, cell_lo);
    w.push_back(static_cast<std::uint32_t>(overlap));
  }
  return w;
}

inline Image resample_area(const Image& img, std::size_t out_w, std::size_t out_h)
{
  // Horizontal pass keeps sums unnormalised (total weight = img.width per pixel).
  std::vector<std::uint64_t> tmp(out_w * img.height * 3);
  for (std::size_t x = 0; x < out_w; ++x) {
    std::size_t first = 0;
    auto w = area_weights_row(img.width, out_w, x, first);
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t c = 0; c < 3; ++c) {
        std::uint64_t s = 0;
        for (std::size_t k = 0; k < w.size(); ++k)
          s += static_cast<std::uint64_t>(w[k]) * img.at(first + k, y, c);
        tmp[(y * out_w + x) * 3 + c] = s;
      }
  }
  Image out(out_w, out_h);
  const std::uint64_t total = static_cast<std::uint64_t>(img.width) * img.height;
  for (std::size_t y = 0; y < out_h; ++y) {
    std::size_t first = 0;
    auto w = area_weights_row(img.height, out_h, y, first);
    for (std::size_t x = 0; x < out_w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        std::uint64_t s = 0;
        for (std::size_t k = 0; k < w.size(); ++k)
          s += static_cast<std::uint64_t>(w[k]) * tmp[((first + k) * out_w + x) * 3 + c];
        out.at(x, y, c) = clamp_u8(static_cast<std::int64_t>((s + total / 2) / total));
      }
  }
  return out;
}

}  // namespace synth_detail

/// Output size of resize_cap: the longer side becomes max_side, the shorter
/// side is scaled and rounded half-up.
inline std::pair<std::size_t, std::size_t> capped_size(std::size_t w, std::size_t h,
                                                       std::size_t max_side = kMaxSide)
{
  if (std::max(w, h) <= max_side)
    return {w, h};
  auto scale_minor = [&](std::size_t minor, std::size_t major) {
    // round_half_up(minor * max_side / major)
    std::size_t v = (2 * minor * max_side + major) / (2 * major);
    return std::max<std::size_t>(v, 1);
  };
  if (w >= h)
    return {max_side, scale_minor(h, w)};
  return {scale_minor(w, h), max_side};
}

/// Caps the longer side at max_side preserving aspect ratio; images within the cap are returned unchanged.
inline Image resize_cap(const Image& img, std::size_t max_side = kMaxSide)
{
  if (max_side == 0)
    throw Error("resize_cap: max_side must be positive");
  auto [w, h] = capped_size(img.width, img.height, max_side);
  if (w == img.width && h == img.height)
    return img;
  return synth_detail::resample_area(img, w, h);
}

inline double psnr(const Image& a, const Image& b)
{
  if (a.width != b.width || a.height != b.height)
    throw Error("psnr: size mismatch");
  if (a.pixels.empty())
    throw Error("psnr: empty images");
  double se = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = static_cast<double>(a.pixels[i]) - static_cast<double>(b.pixels[i]);
    se += d * d;
  }
  if (se == 0.0)
    return std::numeric_limits<double>::infinity();
  const double mse = se / static_cast<double>(a.pixels.size());
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

inline Image crop(const Image& img, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h)
{
  if (x0 + w > img.width || y0 + h > img.height)
    throw Error("crop outside image bounds");
  Image out(w, h);
  for (std::size_t y = 0; y < h; ++y) {
    const auto* src = &img.pixels[((y0 + y) * img.width + x0) * 3];
    std::copy(src, src + w * 3, &out.pixels[y * w * 3]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Degradations

struct GaussianBlur { double sigma; };
struct GaussianNoise { double sigma; };
struct ColorCast { std::array<double, 3> gains; };
struct Exposure { double gamma; };
struct JpegArtifact { int quality; };

using DegradationOp = std::variant<GaussianBlur, GaussianNoise, ColorCast, Exposure, JpegArtifact>;

enum class DegradationKind { blur, noise, color_cast, exposure, jpeg };

inline constexpr std::array<DegradationKind, 5> kAllDegradationKinds{
    DegradationKind::blur, DegradationKind::noise, DegradationKind::color_cast,
    DegradationKind::exposure, DegradationKind::jpeg};

inline std::string_view to_string(DegradationKind k)
{
  switch (k) {
    case DegradationKind::blur: return "blur";
    case DegradationKind::noise: return "noise";
    case DegradationKind::color_cast: return "color_cast";
    case DegradationKind::exposure: return "exposure";
    case DegradationKind::jpeg: return "jpeg";
  }
  return "blur";
}

inline std::optional<DegradationKind> degradation_kind_from_string(std::string_view s)
{
  for (auto k : kAllDegradationKinds)
    if (to_string(k) == s)
      return k;
  return std::nullopt;
}

inline DegradationKind kind_of(const DegradationOp& op)
{
  return static_cast<DegradationKind>(op.index());
}

/// The low-level problem type an operator introduces.
inline ProblemType label_of(DegradationKind k)
{
  static constexpr std::array<std::string_view, 5> tokens{"blur", "noise", "color cast",
                                                          "exposure degradation", "artifact"};
  return *ProblemType::find(Dimension::low_level, tokens[static_cast<std::size_t>(k)]);
}

struct Interval
{
  double lo;
  double hi;
  bool contains(double v) const { return v >= lo && v <= hi; }
};

struct DegradationRanges
{
  Interval blur_sigma{1.0, 3.0};
  Interval noise_sigma{5.0, 25.0};
  Interval cast_gain{0.85, 1.15};
  double cast_min_deviation = 0.07;
  std::vector<Interval> gamma{{0.6, 0.9}, {1.2, 1.8}};
  Interval jpeg_quality{10, 40};

  json to_json() const
  {
    json g = json::array();
    for (const auto& i : gamma)
      g.push_back({i.lo, i.hi});
    return json{{"blur_sigma", {blur_sigma.lo, blur_sigma.hi}},
                {"noise_sigma", {noise_sigma.lo, noise_sigma.hi}},
                {"cast_gain", {cast_gain.lo, cast_gain.hi}},
                {"cast_min_deviation", cast_min_deviation},
                {"gamma", g},
                {"jpeg_quality", {jpeg_quality.lo, jpeg_quality.hi}}};
  }

  /// Overrides from a config object using the same keys as to_json().
  static DegradationRanges from_json(const json& j)
  {
    DegradationRanges r;
    auto interval = [](const json& v) {
      if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number() ||
          v[0].get<double>() > v[1].get<double>())
        throw Error("degradation range must be [lo, hi]");
      return Interval{v[0].get<double>(), v[1].get<double>()};
    };
    if (j.contains("blur_sigma")) r.blur_sigma = interval(j["blur_sigma"]);
    if (j.contains("noise_sigma")) r.noise_sigma = interval(j["noise_sigma"]);
    if (j.contains("cast_gain")) r.cast_gain = interval(j["cast_gain"]);
    if (j.contains("cast_min_deviation")) r.cast_min_deviation = j["cast_min_deviation"].get<double>();
    if (j.contains("gamma")) {
      r.gamma.clear();
      for (const auto& g : j["gamma"])
        r.gamma.push_back(interval(g));
      if (r.gamma.empty())
        throw Error("gamma ranges must not be empty");
    }
    if (j.contains("jpeg_quality")) r.jpeg_quality = interval(j["jpeg_quality"]);
    return r;
  }
};

class ParameterOutOfRange : public Error
{
public:
  using Error::Error;
};

inline void validate_op(const DegradationOp& op, const DegradationRanges& r)
{
  std::visit(
      [&](const auto& o) {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, GaussianBlur>) {
          if (!r.blur_sigma.contains(o.sigma))
            throw ParameterOutOfRange("gaussian_blur sigma out of range");
        } else if constexpr (std::is_same_v<T, GaussianNoise>) {
          if (!r.noise_sigma.contains(o.sigma))
            throw ParameterOutOfRange("gaussian_noise sigma out of range");
        } else if constexpr (std::is_same_v<T, ColorCast>) {
          double max_dev = 0.0;
          for (double g : o.gains) {
            if (!r.cast_gain.contains(g))
              throw ParameterOutOfRange("color_cast gain out of range");
            max_dev = std::max(max_dev, std::abs(g - 1.0));
          }
          if (max_dev + 1e-12 < r.cast_min_deviation)
            throw ParameterOutOfRange("color_cast needs one channel deviating from 1");
        } else if constexpr (std::is_same_v<T, Exposure>) {
          bool ok = false;
          for (const auto& i : r.gamma)
            ok = ok || i.contains(o.gamma);
          if (!ok)
            throw ParameterOutOfRange("exposure gamma out of range");
        } else {
          if (!r.jpeg_quality.contains(o.quality))
            throw ParameterOutOfRange("jpeg quality out of range");
        }
      },
      op);
}

inline json op_to_json(const DegradationOp& op)
{
  return std::visit(
      [](const auto& o) -> json {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, GaussianBlur>)
          return {{"op", "gaussian_blur"}, {"sigma", o.sigma}};
        else if constexpr (std::is_same_v<T, GaussianNoise>)
          return {{"op", "gaussian_noise"}, {"sigma", o.sigma}};
        else if constexpr (std::is_same_v<T, ColorCast>)
          return {{"op", "color_cast"}, {"gains", o.gains}};
        else if constexpr (std::is_same_v<T, Exposure>)
          return {{"op", "exposure"}, {"gamma", o.gamma}};
        else
          return {{"op", "jpeg_artifact"}, {"quality", o.quality}};
      },
      op);
}

inline DegradationOp op_from_json(const json& j)
{
  const auto name = j.at("op").get<std::string>();
  if (name == "gaussian_blur") return GaussianBlur{j.at("sigma").get<double>()};
  if (name == "gaussian_noise") return GaussianNoise{j.at("sigma").get<double>()};
  if (name == "color_cast") return ColorCast{j.at("gains").get<std::array<double, 3>>()};
  if (name == "exposure") return Exposure{j.at("gamma").get<double>()};
  if (name == "jpeg_artifact") return JpegArtifact{j.at("quality").get<int>()};
  throw Error("unknown degradation op '" + name + "'");
}

using DegradationSpec = std::vector<DegradationOp>;

namespace synth_detail {

inline std::vector<std::int32_t> gaussian_kernel_q14(double sigma)
{
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> w(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    w[i + radius] = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
    sum += w[i + radius];
  }
  std::vector<std::int32_t> q(w.size());
  std::int32_t qsum = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    q[i] = static_cast<std::int32_t>(std::lround(w[i] / sum * 16384.0));
    qsum += q[i];
  }
  q[radius] += 16384 - qsum;
  return q;
}

inline Image gaussian_blur(const Image& img, double sigma)
{
  const auto k = gaussian_kernel_q14(sigma);
  const auto radius = static_cast<std::ptrdiff_t>(k.size() / 2);
  const auto w = static_cast<std::ptrdiff_t>(img.width);
  const auto h = static_cast<std::ptrdiff_t>(img.height);
  auto clampi = [](std::ptrdiff_t v, std::ptrdiff_t hi) { return v < 0 ? 0 : (v >= hi ? hi - 1 : v); };
  std::vector<std::int64_t> tmp(img.pixels.size());
  for (std::ptrdiff_t y = 0; y < h; ++y)
    for (std::ptrdiff_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        std::int64_t s = 0;
        for (std::ptrdiff_t i = -radius; i <= radius; ++i)
          s += static_cast<std::int64_t>(k[i + radius]) *
               img.at(static_cast<std::size_t>(clampi(x + i, w)), static_cast<std::size_t>(y), c);
        tmp[(static_cast<std::size_t>(y * w + x)) * 3 + c] = s;
      }
  Image out(img.width, img.height);
  for (std::ptrdiff_t y = 0; y < h; ++y)
    for (std::ptrdiff_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        std::int64_t s = 0;
        for (std::ptrdiff_t i = -radius; i <= radius; ++i)
          s += k[i + radius] * tmp[static_cast<std::size_t>(clampi(y + i, h) * w + x) * 3 + c];
        out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c) =
            clamp_u8((s + (std::int64_t{1} << 27)) >> 28);
      }
  return out;
}

inline Image gaussian_noise(const Image& img, double sigma, detail::Rng& rng)
{
  const std::int64_t sigma_q8 = std::lround(sigma * 256.0);
  Image out = img;
  for (auto& p : out.pixels) {
    const std::int64_t delta = sigma_q8 * rng.gaussian_q16();  // units of 2^-24
    p = clamp_u8(p + ((delta + (std::int64_t{1} << 23)) >> 24));
  }
  return out;
}

inline Image color_cast(const Image& img, const std::array<double, 3>& gains)
{
  std::array<std::int64_t, 3> q{};
  for (std::size_t c = 0; c < 3; ++c)
    q[c] = std::lround(gains[c] * 1024.0);
  Image out = img;
  for (std::size_t i = 0; i < out.pixels.size(); ++i)
    out.pixels[i] = clamp_u8((out.pixels[i] * q[i % 3] + 512) >> 10);
  return out;
}

inline Image exposure(const Image& img, double gamma)
{
  std::array<std::uint8_t, 256> lut{};
  for (int v = 0; v < 256; ++v)
    lut[v] = clamp_u8(std::lround(255.0 * std::pow(v / 255.0, gamma)));
  Image out = img;
  for (auto& p : out.pixels)
    p = lut[p];
  return out;
}

}  // namespace synth_detail

/// Applies one operator. `rng` is only consumed by noise.
inline Image apply_op(const Image& img, const DegradationOp& op, detail::Rng& rng)
{
  return std::visit(
      [&](const auto& o) -> Image {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, GaussianBlur>)
          return synth_detail::gaussian_blur(img, o.sigma);
        else if constexpr (std::is_same_v<T, GaussianNoise>)
          return synth_detail::gaussian_noise(img, o.sigma, rng);
        else if constexpr (std::is_same_v<T, ColorCast>)
          return synth_detail::color_cast(img, o.gains);
        else if constexpr (std::is_same_v<T, Exposure>)
          return synth_detail::exposure(img, o.gamma);
        else
          return decode_jpeg(encode_jpeg(img, o.quality));
      },
      op);
}

/// Labeled image pair with enough provenance to regenerate it.
struct SynthPair
{
  Image image_a;
  Image image_b;
  std::map<Dimension, Verdict> labels;
  json provenance;
};

/// Applies the chain in order. Low-level label is the union of operator labels,
/// (Yes, {}) for an empty chain; semantic is always (Yes, {}).
inline SynthPair apply_degradation(const Image& img, const DegradationSpec& spec, std::uint64_t seed,
                                   const DegradationRanges& ranges = {})
{
  for (const auto& op : spec)
    validate_op(op, ranges);
  Image out = img;
  ProblemSet labels(Dimension::low_level);
  json ops = json::array();
  for (std::size_t i = 0; i < spec.size(); ++i) {
    detail::Rng rng(detail::derive_seed(seed, i));
    out = apply_op(out, spec[i], rng);
    labels.insert(label_of(kind_of(spec[i])));
    ops.push_back(op_to_json(spec[i]));
  }
  SynthPair pair{img, std::move(out), {}, json{{"kind", "degradation"}, {"seed", seed}, {"ops", ops}}};
  pair.labels.emplace(Dimension::low_level,
                      labels.empty() ? Verdict::yes(Dimension::low_level) : Verdict::no(labels));
  pair.labels.emplace(Dimension::semantic, Verdict::yes(Dimension::semantic));
  return pair;
}

/// Draws operator parameters from the configured ranges.
inline DegradationOp sample_op(DegradationKind kind, const DegradationRanges& r, detail::Rng& rng)
{
  auto in = [&](const Interval& i) { return i.lo + (i.hi - i.lo) * rng.unit(); };
  switch (kind) {
    case DegradationKind::blur: return GaussianBlur{in(r.blur_sigma)};
    case DegradationKind::noise: return GaussianNoise{in(r.noise_sigma)};
    case DegradationKind::color_cast: {
      ColorCast cc{};
      for (auto& g : cc.gains)
        g = in(r.cast_gain);
      // Push one channel out to the minimum deviation if the draw stayed too close to neutral.
      double max_dev = 0.0;
      std::size_t arg = 0;
      for (std::size_t c = 0; c < 3; ++c)
        if (std::abs(cc.gains[c] - 1.0) > max_dev) {
          max_dev = std::abs(cc.gains[c] - 1.0);
          arg = c;
        }
      if (max_dev < r.cast_min_deviation) {
        const double sign = cc.gains[arg] >= 1.0 ? 1.0 : -1.0;
        cc.gains[arg] = std::clamp(1.0 + sign * r.cast_min_deviation, r.cast_gain.lo, r.cast_gain.hi);
      }
      return cc;
    }
    case DegradationKind::exposure: {
      const auto& i = r.gamma[static_cast<std::size_t>(rng.uniform_int(0, r.gamma.size() - 1))];
      return Exposure{in(i)};
    }
    case DegradationKind::jpeg:
      return JpegArtifact{static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(std::ceil(r.jpeg_quality.lo)),
                                                           static_cast<std::uint64_t>(std::floor(r.jpeg_quality.hi))))};
  }
  return GaussianBlur{r.blur_sigma.lo};
}

/// A non-empty random subset of `allowed`, kept in the given order, with sampled parameters.
inline DegradationSpec sample_degradation_spec(std::span<const DegradationKind> allowed,
                                               const DegradationRanges& ranges, detail::Rng& rng)
{
  if (allowed.empty())
    return {};
  std::uint64_t mask = 0;
  while (mask == 0)
    mask = rng.uniform_int(0, (std::uint64_t{1} << allowed.size()) - 1);
  DegradationSpec spec;
  for (std::size_t i = 0; i < allowed.size(); ++i)
    if ((mask >> i) & 1u)
      spec.push_back(sample_op(allowed[i], ranges, rng));
  return spec;
}

// ---------------------------------------------------------------------------
// Texture-aware crops

class ImageTooSmall : public Error
{
public:
  using Error::Error;
};

struct CropParams
{
  double ratio;
  std::size_t crop_w, crop_h;
  std::array<std::size_t, 2> offset_a, offset_b;
};

namespace synth_detail {

inline SynthPair crop_pair_from(const Image& img, const CropParams& p, std::uint64_t seed)
{
  SynthPair pair{crop(img, p.offset_a[0], p.offset_a[1], p.crop_w, p.crop_h),
                 crop(img, p.offset_b[0], p.offset_b[1], p.crop_w, p.crop_h),
                 {},
                 json{{"kind", "texture_crop"},
                      {"seed", seed},
                      {"ratio", p.ratio},
                      {"crop_size", {p.crop_w, p.crop_h}},
                      {"offset_a", p.offset_a},
                      {"offset_b", p.offset_b}}};
  const bool same = p.offset_a == p.offset_b;
  pair.labels.emplace(Dimension::structure,
                      same ? Verdict::yes(Dimension::structure)
                           : Verdict::no(canonicalize_problem_types(Dimension::structure, {"misalignment"})));
  pair.labels.emplace(Dimension::semantic, Verdict::yes(Dimension::semantic));
  return pair;
}

}  // namespace synth_detail

/// Two equal-size crops of one image at independent offsets. One ratio r is
/// drawn uniformly from ratio_range and both crops measure round(r*w) x round(r*h).
inline SynthPair texture_crop_pair(const Image& img, std::uint64_t seed,
                                   Interval ratio_range = {0.95, 0.98})
{
  if (!(ratio_range.lo > 0.0) || ratio_range.hi > 1.0 || ratio_range.lo > ratio_range.hi)
    throw Error("crop ratio range must lie within (0, 1]");
  detail::Rng rng(seed);
  CropParams p{};
  p.ratio = ratio_range.lo + (ratio_range.hi - ratio_range.lo) * rng.unit();
  const auto cw = std::lround(p.ratio * static_cast<double>(img.width));
  const auto ch = std::lround(p.ratio * static_cast<double>(img.height));
  if (cw < 1 || ch < 1)
    throw ImageTooSmall("image " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                        " is too small for a texture crop");
  p.crop_w = std::min<std::size_t>(static_cast<std::size_t>(cw), img.width);
  p.crop_h = std::min<std::size_t>(static_cast<std::size_t>(ch), img.height);
  for (auto* off : {&p.offset_a, &p.offset_b}) {
    (*off)[0] = static_cast<std::size_t>(rng.uniform_int(0, img.width - p.crop_w));
    (*off)[1] = static_cast<std::size_t>(rng.uniform_int(0, img.height - p.crop_h));
  }
  return synth_detail::crop_pair_from(img, p, seed);
}

/// Rebuilds a pair from its provenance record.
inline SynthPair regenerate_pair(const Image& img, const json& provenance,
                                 const DegradationRanges& ranges = {})
{
  const auto kind = provenance.at("kind").get<std::string>();
  const auto seed = provenance.at("seed").get<std::uint64_t>();
  if (kind == "degradation") {
    DegradationSpec spec;
    for (const auto& op : provenance.at("ops"))
      spec.push_back(op_from_json(op));
    return apply_degradation(img, spec, seed, ranges);
  }
  if (kind == "texture_crop") {
    CropParams p{};
    p.ratio = provenance.at("ratio").get<double>();
    p.crop_w = provenance.at("crop_size")[0].get<std::size_t>();
    p.crop_h = provenance.at("crop_size")[1].get<std::size_t>();
    p.offset_a = provenance.at("offset_a").get<std::array<std::size_t, 2>>();
    p.offset_b = provenance.at("offset_b").get<std::array<std::size_t, 2>>();
    return synth_detail::crop_pair_from(img, p, seed);
  }
  throw Error("unknown provenance kind '" + kind + "'");
}

/// Source of labeled pairs for the synth pipeline. Generative sources (for
/// example semantic corruption through a restoration model) plug in here.
class PairSource
{
public:
  virtual ~PairSource() = default;
  virtual std::string name() const = 0;
  virtual SynthPair generate(const Image& img, std::uint64_t seed) const = 0;
};

class TextureCropSource final : public PairSource
{
public:
  explicit TextureCropSource(Interval ratio_range = {0.95, 0.98}) : range_(ratio_range) {}
  std::string name() const override { return "texture_crop"; }
  SynthPair generate(const Image& img, std::uint64_t seed) const override
  {
    return texture_crop_pair(img, seed, range_);
  }

private:
  Interval range_;
};

class DegradationSource final : public PairSource
{
public:
  DegradationSource(std::vector<DegradationKind> allowed, DegradationRanges ranges = {})
      : allowed_(std::move(allowed)), ranges_(std::move(ranges))
  {
  }
  std::string name() const override { return "degradation"; }
  SynthPair generate(const Image& img, std::uint64_t seed) const override
  {
    detail::Rng rng(detail::splitmix64(seed));
    auto spec = sample_degradation_spec(allowed_, ranges_, rng);
    return apply_degradation(img, spec, seed, ranges_);
  }

private:
  std::vector<DegradationKind> allowed_;
  DegradationRanges ranges_;
};

}  // namespace stablei2i
