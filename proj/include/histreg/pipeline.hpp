#ifndef HISTREG_PIPELINE_HPP
#define HISTREG_PIPELINE_HPP

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "histreg/affine.hpp"
#include "histreg/core.hpp"
#include "histreg/diffeo.hpp"
#include "histreg/eval.hpp"
#include "histreg/io.hpp"
#include "histreg/preprocess.hpp"
#include "histreg/warp.hpp"

namespace histreg {

/// Fixed file names inside a stage output directory.
namespace files {
inline constexpr const char* fixed = "fixed.pgm";
inline constexpr const char* moving = "moving.pgm";
inline constexpr const char* mask = "mask.pgm";
inline constexpr const char* prep = "prep.txt";
inline constexpr const char* affine = "affine.txt";
inline constexpr const char* field = "field.df2d";
inline constexpr const char* registered = "registered.pgm";
inline constexpr const char* fixed_landmarks = "fixed_landmarks.csv";
inline constexpr const char* moving_landmarks = "moving_landmarks.csv";
inline constexpr const char* warped_landmarks = "warped_landmarks.csv";
inline constexpr const char* scores = "scores.csv";
inline constexpr const char* manifest = "manifest.txt";
} // namespace files

inline std::string join_path(const std::string& dir, const std::string& name)
{
  return (std::filesystem::path(dir) / name).string();
}

inline std::string join_ints(const std::vector<int>& v, char sep = 'x')
{
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i)
  {
    if (i)
      out += sep;
    out += std::to_string(v[i]);
  }
  return out;
}

/// Parses "100x50x10" style lists.
inline std::vector<int> parse_int_list(const std::string& text)
{
  std::vector<int> out;
  for (const auto& tok : split(text, 'x'))
  {
    const double v = parse_double(tok, "integer list '" + text + "'");
    if (v != std::floor(v) || v < 0 || v > 1e9)
      throw InvalidArgument("expected non-negative integers in '" + text + "'");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Provenance sidecar

inline KeyValues provenance_record(const PreprocessedPair& pair)
{
  return {{"kernel_size", std::to_string(pair.kernel_size)},
          {"resample_factor", std::to_string(pair.resample_factor)},
          {"width", std::to_string(pair.width())},
          {"height", std::to_string(pair.height())},
          {"fixed_pad_left", std::to_string(pair.fixed_offset.left)},
          {"fixed_pad_top", std::to_string(pair.fixed_offset.top)},
          {"moving_pad_left", std::to_string(pair.moving_offset.left)},
          {"moving_pad_top", std::to_string(pair.moving_offset.top)}};
}

namespace detail {

inline int require_int(const std::map<std::string, std::string>& kv, const std::string& key, const std::string& path)
{
  const auto it = kv.find(key);
  if (it == kv.end())
    throw FormatError("missing key '" + key + "' in " + path);
  const double v = parse_double(it->second, path);
  if (v != std::floor(v))
    throw FormatError("key '" + key + "' is not an integer in " + path);
  return static_cast<int>(v);
}

} // namespace detail

/// Loads fixed/moving/mask images and the provenance sidecar written by the preprocess stage.
inline PreprocessedPair load_preprocessed(const std::string& fixed_path, const std::string& moving_path,
                                          const std::string& mask_path, const std::string& prep_path)
{
  PreprocessedPair pair;
  pair.fixed = read_scalar_image(fixed_path);
  pair.moving = read_scalar_image(moving_path);
  pair.mask = read_mask(mask_path);
  if (!pair.fixed.same_size(pair.moving) || !pair.fixed.same_size(pair.mask))
    throw FormatError("preprocessed images and mask differ in size");
  const auto kv = read_key_values(prep_path);
  pair.kernel_size = detail::require_int(kv, "kernel_size", prep_path);
  pair.resample_factor = detail::require_int(kv, "resample_factor", prep_path);
  pair.fixed_offset = {detail::require_int(kv, "fixed_pad_left", prep_path),
                       detail::require_int(kv, "fixed_pad_top", prep_path)};
  pair.moving_offset = {detail::require_int(kv, "moving_pad_left", prep_path),
                        detail::require_int(kv, "moving_pad_top", prep_path)};
  if (pair.kernel_size < 1 || pair.resample_factor < 1)
    throw FormatError("invalid provenance values in " + prep_path);
  return pair;
}

inline PreprocessedPair load_preprocessed(const std::string& dir)
{
  return load_preprocessed(join_path(dir, files::fixed), join_path(dir, files::moving), join_path(dir, files::mask),
                           join_path(dir, files::prep));
}

// ---------------------------------------------------------------------------
// Stages

struct PreprocessInputs
{
  std::string fixed_image;
  std::string moving_image;
  std::optional<std::string> fixed_landmarks;
  std::optional<std::string> moving_landmarks;
  DeconvFlags deconv;
  StainRemoval stains;
};

/**
 * Preprocess and write the stage outputs. The returned pair holds the
 * 8-bit quantized images exactly as stored, so downstream stages see the
 * same data whether they run in-process or from the files.
 */
inline PreprocessedPair run_preprocess_stage(const PreprocessInputs& in, const RegistrationParams& params,
                                             const std::string& out_dir)
{
  PreprocessedPair pair = prepare_pair(read_image(in.fixed_image), read_image(in.moving_image), params, in.deconv,
                                       in.stains);
  pair.fixed = quantize_8bit(pair.fixed);
  pair.moving = quantize_8bit(pair.moving);

  std::filesystem::create_directories(out_dir);
  write_image(join_path(out_dir, files::fixed), pair.fixed);
  write_image(join_path(out_dir, files::moving), pair.moving);
  write_mask(join_path(out_dir, files::mask), pair.mask);
  write_key_values(join_path(out_dir, files::prep), provenance_record(pair));

  if (in.fixed_landmarks)
  {
    LandmarkSet lm = read_landmarks(*in.fixed_landmarks);
    for (Vec2& p : lm.points)
      p = pair.fixed_to_working(p);
    write_landmarks(join_path(out_dir, files::fixed_landmarks), lm);
  }
  if (in.moving_landmarks)
  {
    LandmarkSet lm = read_landmarks(*in.moving_landmarks);
    for (Vec2& p : lm.points)
      p = pair.moving_to_working(p);
    write_landmarks(join_path(out_dir, files::moving_landmarks), lm);
  }
  return pair;
}

/// Working-resolution center used for every affine in the pipeline.
inline AffineTransform2D centered_identity(const PreprocessedPair& pair)
{
  const Vec2 c = image_center(pair.width(), pair.height());
  return AffineTransform2D::identity(c.x, c.y);
}

inline DiffeoResult run_diffeo(const PreprocessedPair& pair, const AffineTransform2D& affine,
                               const RegistrationParams& params)
{
  const ScalarImage moving_affine = warp_image_affine(pair.moving, affine);
  DiffeoResult res = greedy_register(pair.fixed, moving_affine, params, pair.kernel_size);
  // The field file stores float32; downstream stages use the stored precision.
  res.field = to_float32(res.field);
  res.min_jacobian = min_value(jacobian_det(res.field));
  return res;
}

/// Moving image resampled into the fixed frame: affine first, then the field.
inline ScalarImage apply_transform(const ScalarImage& moving, const TotalTransform& t)
{
  return warp_image(warp_image_affine(moving, t.affine), t.field);
}

inline std::string format_scores_csv(const std::vector<std::pair<std::string, PairScore>>& scores)
{
  std::string out = "pair_id,median_rtre,robustness\n";
  for (const auto& [id, s] : scores)
    out += id + "," + format_exact(s.median_rtre) + "," + format_exact(s.robustness) + "\n";
  return out;
}

inline std::string format_summary(const ScoreSummary& s)
{
  return "pairs=" + std::to_string(s.n_pairs) + " mean_median_rtre=" + format_exact(s.mean_median_rtre) +
         " mean_robustness=" + format_exact(s.mean_robustness);
}

struct RunInputs
{
  std::string pair_id = "pair";
  PreprocessInputs preprocess;
  std::string out_dir;
};

struct RunOutcome
{
  PreprocessedPair pair;
  AffineResult affine;
  DiffeoResult diffeo;
  std::optional<PairScore> score;
  KeyValues manifest;
};

inline KeyValues params_record(const RegistrationParams& p)
{
  return {{"sigma_s", format_exact(p.sigma_s)},
          {"sigma_t", format_exact(p.sigma_t)},
          {"iters", join_ints(p.iters_per_level)},
          {"pyramid", join_ints(p.pyramid_factors)},
          {"ncc_scale", format_exact(p.ncc_scale)},
          {"epsilon_max", format_exact(p.epsilon_max)},
          {"seed", std::to_string(p.seed)},
          {"candidates", std::to_string(p.n_candidates)},
          {"factor", std::to_string(p.resample_factor)}};
}

/**
 * Full pipeline for one pair: preprocess, affine, diffeomorphic, apply and,
 * when both landmark files are given, evaluate. Every intermediate is written
 * to `out_dir` with the same bytes the individual stage commands produce.
 */
inline RunOutcome run_pair(const RunInputs& in, const RegistrationParams& params)
{
  using clock = std::chrono::steady_clock;
  auto seconds = [](clock::time_point a, clock::time_point b) {
    return format_exact(std::chrono::duration<double>(b - a).count());
  };
  params.validate();
  for (const auto& p : {std::optional<std::string>(in.preprocess.fixed_image),
                        std::optional<std::string>(in.preprocess.moving_image), in.preprocess.fixed_landmarks,
                        in.preprocess.moving_landmarks})
    if (p && !std::filesystem::exists(*p))
      throw IoError("missing input: " + *p);

  RunOutcome out;
  const std::string& dir = in.out_dir;
  KeyValues times;

  auto t0 = clock::now();
  out.pair = run_preprocess_stage(in.preprocess, params, dir);
  auto t1 = clock::now();
  times.push_back({"time_preprocess_s", seconds(t0, t1)});

  out.affine = register_affine(out.pair, params);
  write_affine(join_path(dir, files::affine), out.affine.transform);
  auto t2 = clock::now();
  times.push_back({"time_affine_s", seconds(t1, t2)});

  out.diffeo = run_diffeo(out.pair, out.affine.transform, params);
  write_field(join_path(dir, files::field), out.diffeo.field);
  auto t3 = clock::now();
  times.push_back({"time_diffeo_s", seconds(t2, t3)});

  const TotalTransform total{out.affine.transform, out.diffeo.field};
  write_image(join_path(dir, files::registered), apply_transform(out.pair.moving, total));
  const bool have_landmarks = in.preprocess.fixed_landmarks && in.preprocess.moving_landmarks;
  LandmarkSet fixed_lm, moving_lm, warped_lm;
  if (have_landmarks)
  {
    fixed_lm = read_landmarks(join_path(dir, files::fixed_landmarks));
    moving_lm = read_landmarks(join_path(dir, files::moving_landmarks));
    warped_lm = map_landmarks(fixed_lm, total);
    write_landmarks(join_path(dir, files::warped_landmarks), warped_lm);
    // Evaluate on the values as stored, as the evaluate command would.
    warped_lm = read_landmarks(join_path(dir, files::warped_landmarks));
  }
  auto t4 = clock::now();
  times.push_back({"time_apply_s", seconds(t3, t4)});

  if (have_landmarks)
  {
    out.score = score_pair(moving_lm, fixed_lm, warped_lm, out.pair.width(), out.pair.height());
    atomic_write(join_path(dir, files::scores), format_scores_csv({{in.pair_id, *out.score}}));
  }
  auto t5 = clock::now();
  times.push_back({"time_evaluate_s", seconds(t4, t5)});

  KeyValues& m = out.manifest;
  m.push_back({"pair_id", in.pair_id});
  m.push_back({"fixed_image", in.preprocess.fixed_image});
  m.push_back({"moving_image", in.preprocess.moving_image});
  m.push_back({"fixed_landmarks", in.preprocess.fixed_landmarks.value_or("")});
  m.push_back({"moving_landmarks", in.preprocess.moving_landmarks.value_or("")});
  m.push_back({"deconv_fixed", in.preprocess.deconv.fixed ? "1" : "0"});
  m.push_back({"deconv_moving", in.preprocess.deconv.moving ? "1" : "0"});
  for (auto& kv : params_record(params))
    m.push_back(kv);
  for (auto& kv : provenance_record(out.pair))
    m.push_back(kv);
  for (const char* name : {files::fixed, files::moving, files::mask, files::prep, files::affine, files::field,
                           files::registered})
    m.push_back({std::string("out_") + name, join_path(dir, name)});
  if (have_landmarks)
    for (const char* name : {files::fixed_landmarks, files::moving_landmarks, files::warped_landmarks, files::scores})
      m.push_back({std::string("out_") + name, join_path(dir, name)});
  m.push_back({"affine_init_value", format_exact(out.affine.init_value)});
  m.push_back({"affine_final_value", format_exact(out.affine.final_value)});
  m.push_back({"affine_evaluations", std::to_string(out.affine.n_evals)});
  for (std::size_t i = 0; i < out.diffeo.per_level_values.size(); ++i)
    m.push_back({"diffeo_value_level" + std::to_string(i), format_exact(out.diffeo.per_level_values[i])});
  m.push_back({"min_jacobian", format_exact(out.diffeo.min_jacobian)});
  if (out.score)
  {
    m.push_back({"median_rtre", format_exact(out.score->median_rtre)});
    m.push_back({"median_tre_px", format_exact(median(out.score->tres))});
    m.push_back({"robustness", format_exact(out.score->robustness)});
  }
  for (auto& kv : times)
    m.push_back(kv);
  write_key_values(join_path(dir, files::manifest), m);
  return out;
}

// ---------------------------------------------------------------------------
// Parameter sweeps

struct PairEntry
{
  std::string pair_id;
  std::string fixed_image;
  std::string moving_image;
  std::string fixed_landmarks;
  std::string moving_landmarks;
};

/// CSV with header `pair_id,fixed,moving,fixed_landmarks,moving_landmarks`; relative paths resolve against the manifest's directory.
inline std::vector<PairEntry> read_pair_manifest(const std::string& path)
{
  const auto lines = split_lines(read_file_text(path));
  if (lines.empty() || trim(lines.front()) != "pair_id,fixed,moving,fixed_landmarks,moving_landmarks")
    throw FormatError("bad header in pair manifest: " + path);
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path q(trim(p));
    return q.is_absolute() ? q.string() : (base / q).string();
  };
  std::vector<PairEntry> out;
  for (std::size_t i = 1; i < lines.size(); ++i)
  {
    if (trim(lines[i]).empty())
      continue;
    const auto f = split(lines[i], ',');
    if (f.size() != 5)
      throw FormatError("pair manifest row " + std::to_string(i) + " needs 5 fields: " + path);
    out.push_back({trim(f[0]), resolve(f[1]), resolve(f[2]), resolve(f[3]), resolve(f[4])});
  }
  if (out.empty())
    throw FormatError("pair manifest lists no pairs: " + path);
  return out;
}

struct SweepRow
{
  double sigma_s = 0.0;
  double sigma_t = 0.0;
  double avg_median_rtre = -1.0;
  double avg_robustness = -1.0;
  int status = 0;  // 0 ok, otherwise the exit code of the first failure
  std::string error;
};

inline int exit_code_for(const std::exception& e)
{
  if (dynamic_cast<const InvalidArgument*>(&e))
    return 1;
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const std::filesystem::filesystem_error*>(&e))
    return 2;
  return 3;
}

/**
 * Runs the full pipeline for every pair at every (sigma_s, sigma_t) cell.
 * Pairs within a cell run on up to `jobs` threads, one pair per worker.
 * Rows come back sorted by average median rTRE; failed cells keep sentinel
 * values (-1) and sort last.
 */
inline std::vector<SweepRow> run_sweep(const std::vector<PairEntry>& pairs, const std::vector<double>& sigmas_s,
                                       const std::vector<double>& sigmas_t, const RegistrationParams& base,
                                       const std::string& work_dir, const PreprocessInputs& options = {},
                                       int jobs = 1)
{
  std::vector<SweepRow> rows;
  for (double ss : sigmas_s)
    for (double st : sigmas_t)
    {
      SweepRow row;
      row.sigma_s = ss;
      row.sigma_t = st;
      RegistrationParams params = base;
      params.sigma_s = ss;
      params.sigma_t = st;
      const std::string cell_dir = join_path(work_dir, "s" + format_exact(ss) + "_t" + format_exact(st));

      std::vector<std::optional<PairScore>> scores(pairs.size());
      std::vector<std::pair<int, std::string>> errors(pairs.size(), {0, ""});
      std::atomic<std::size_t> next{0};
      auto worker = [&] {
        for (std::size_t i = next++; i < pairs.size(); i = next++)
        {
          try
          {
            RunInputs in;
            in.pair_id = pairs[i].pair_id;
            in.preprocess = options;
            in.preprocess.fixed_image = pairs[i].fixed_image;
            in.preprocess.moving_image = pairs[i].moving_image;
            in.preprocess.fixed_landmarks = pairs[i].fixed_landmarks;
            in.preprocess.moving_landmarks = pairs[i].moving_landmarks;
            in.out_dir = join_path(cell_dir, pairs[i].pair_id);
            scores[i] = run_pair(in, params).score;
          }
          catch (const std::exception& e)
          {
            errors[i] = {exit_code_for(e), e.what()};
          }
        }
      };
      const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(pairs.size())));
      std::vector<std::thread> threads;
      for (int t = 1; t < n_threads; ++t)
        threads.emplace_back(worker);
      worker();
      for (auto& t : threads)
        t.join();

      std::vector<PairScore> ok;
      for (std::size_t i = 0; i < pairs.size(); ++i)
      {
        if (errors[i].first != 0 && row.status == 0)
        {
          row.status = errors[i].first;
          row.error = pairs[i].pair_id + ": " + errors[i].second;
        }
        if (scores[i])
          ok.push_back(*scores[i]);
      }
      if (row.status == 0)
      {
        const ScoreSummary sum = aggregate(ok);
        row.avg_median_rtre = sum.mean_median_rtre;
        row.avg_robustness = sum.mean_robustness;
      }
      rows.push_back(row);
    }
  std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    if ((a.status == 0) != (b.status == 0))
      return a.status == 0;
    return a.avg_median_rtre < b.avg_median_rtre;
  });
  return rows;
}

inline std::string format_sweep_csv(const std::vector<SweepRow>& rows)
{
  std::string out = "sigma_s,sigma_t,avg_median_rtre,avg_robustness,status\n";
  for (const auto& r : rows)
    out += format_exact(r.sigma_s) + "," + format_exact(r.sigma_t) + "," + format_exact(r.avg_median_rtre) + "," +
           format_exact(r.avg_robustness) + "," + std::to_string(r.status) + "\n";
  return out;
}

} // namespace histreg

#endif // HISTREG_PIPELINE_HPP
