// histreg: command-line driver for the two-stage histology registration pipeline.
#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "histreg/pipeline.hpp"

#ifndef HISTREG_DEFAULT_STAIN_MATRIX
#define HISTREG_DEFAULT_STAIN_MATRIX "stains_hdab.txt"
#endif

namespace {

using namespace histreg;

struct ParamArgs
{
  RegistrationParams params = default_params();
  std::string iters = "100x50x10";
  std::string pyramid = "4x2x1";

  void add_to(CLI::App* app)
  {
    app->add_option("--sigma-s", params.sigma_s, "update-field smoothing sigma (pixels)")->capture_default_str();
    app->add_option("--sigma-t", params.sigma_t, "total-field smoothing sigma (pixels)")->capture_default_str();
    app->add_option("--iters", iters, "iterations per pyramid level, coarse to fine")->capture_default_str();
    app->add_option("--pyramid", pyramid, "pyramid factors, coarse to fine")->capture_default_str();
    app->add_option("--ncc-scale", params.ncc_scale, "NCC kernel size divisor S")->capture_default_str();
    app->add_option("--factor", params.resample_factor, "input resampling factor f")->capture_default_str();
    app->add_option("--seed", params.seed, "brute-force search seed")->capture_default_str();
    app->add_option("--candidates", params.n_candidates, "random rigid candidates")->capture_default_str();
    app->add_option("--epsilon-max", params.epsilon_max, "max update displacement per iteration (pixels)")
        ->capture_default_str();
  }

  RegistrationParams resolve() const
  {
    RegistrationParams p = params;
    p.iters_per_level = parse_int_list(iters);
    p.pyramid_factors = parse_int_list(pyramid);
    p.validate();
    return p;
  }
};

struct StainArgs
{
  std::string deconv_roles;
  std::string matrix_path = HISTREG_DEFAULT_STAIN_MATRIX;
  int channel = 1;

  void add_to(CLI::App* app)
  {
    app->add_option("--deconv-dab", deconv_roles, "remove the DAB stain from: fixed, moving or fixed,moving");
    app->add_option("--stain-matrix", matrix_path, "stain vector file (9 numbers, row-major)")
        ->capture_default_str();
    app->add_option("--stain-channel", channel, "row of the stain matrix to remove")->capture_default_str();
  }

  void apply(PreprocessInputs& in) const
  {
    for (const auto& role : split(deconv_roles, ','))
    {
      const std::string r = trim(role);
      if (r.empty())
        continue;
      if (r == "fixed")
        in.deconv.fixed = true;
      else if (r == "moving")
        in.deconv.moving = true;
      else
        throw InvalidArgument("--deconv-dab accepts 'fixed' and/or 'moving', got '" + r + "'");
    }
    if (in.deconv.fixed || in.deconv.moving)
    {
      in.stains.matrix = read_stain_matrix(matrix_path);
      in.stains.channel = channel;
    }
  }
};

std::optional<std::string> optional_path(const std::string& s)
{
  if (s.empty())
    return std::nullopt;
  return s;
}

std::vector<double> parse_double_list(const std::string& text)
{
  std::vector<double> out;
  for (const auto& tok : split(text, ','))
    out.push_back(parse_double(tok, "list '" + text + "'"));
  return out;
}

void require_exists(const std::string& path)
{
  if (!std::filesystem::exists(path))
    throw IoError("missing input: " + path);
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"histreg: affine + greedy diffeomorphic registration of histology slides"};
  app.require_subcommand(1);

  // preprocess
  ParamArgs pre_params;
  StainArgs pre_stains;
  std::string pre_fixed, pre_moving, pre_out, pre_fixed_lm, pre_moving_lm;
  auto* pre = app.add_subcommand("preprocess", "grayscale, resample, pad and mask an image pair");
  pre->add_option("--fixed", pre_fixed, "fixed image (PNG/PGM/PPM)")->required();
  pre->add_option("--moving", pre_moving, "moving image (PNG/PGM/PPM)")->required();
  pre->add_option("--out-dir", pre_out, "output directory")->required();
  pre->add_option("--fixed-landmarks", pre_fixed_lm, "fixed landmark CSV to convert to working coordinates");
  pre->add_option("--moving-landmarks", pre_moving_lm, "moving landmark CSV to convert to working coordinates");
  pre_params.add_to(pre);
  pre_stains.add_to(pre);

  // affine
  ParamArgs aff_params;
  std::string aff_dir, aff_out;
  auto* aff = app.add_subcommand("affine", "brute-force rigid search + LBFGS affine refinement");
  aff->add_option("--prep-dir", aff_dir, "directory written by 'preprocess'")->required();
  aff->add_option("--out", aff_out, "affine output file (default: <prep-dir>/affine.txt)");
  aff_params.add_to(aff);

  // diffeo
  ParamArgs dif_params;
  std::string dif_dir, dif_affine, dif_out;
  auto* dif = app.add_subcommand("diffeo", "greedy diffeomorphic registration after the affine stage");
  dif->add_option("--prep-dir", dif_dir, "directory written by 'preprocess'")->required();
  dif->add_option("--affine", dif_affine, "affine file (default: <prep-dir>/affine.txt)");
  dif->add_option("--out", dif_out, "field output file (default: <prep-dir>/field.df2d)");
  dif_params.add_to(dif);

  // apply
  std::string app_affine, app_field, app_image, app_landmarks, app_out;
  auto* apl = app.add_subcommand("apply", "warp a working image or map working-frame landmarks");
  apl->add_option("--affine", app_affine, "affine file")->required();
  apl->add_option("--field", app_field, "DF2D field file")->required();
  auto* img_opt = apl->add_option("--image", app_image, "moving working image to resample into the fixed frame");
  auto* lm_opt = apl->add_option("--landmarks", app_landmarks, "fixed-frame landmark CSV to map into the moving frame");
  img_opt->excludes(lm_opt);
  apl->add_option("--out", app_out, "output image or CSV")->required();

  // evaluate
  std::string ev_target, ev_before, ev_after, ev_out, ev_id = "pair";
  double ev_w = 0, ev_h = 0;
  auto* ev = app.add_subcommand("evaluate", "TRE / rTRE / robustness for one pair");
  ev->add_option("--target", ev_target, "target landmarks (moving frame)")->required();
  ev->add_option("--before", ev_before, "landmarks before registration")->required();
  ev->add_option("--after", ev_after, "landmarks after registration")->required();
  ev->add_option("--width", ev_w, "image width used for normalization")->required();
  ev->add_option("--height", ev_h, "image height used for normalization")->required();
  ev->add_option("--pair-id", ev_id, "pair identifier")->capture_default_str();
  ev->add_option("--out", ev_out, "score CSV output")->required();

  // run
  ParamArgs run_params;
  StainArgs run_stains;
  std::string run_fixed, run_moving, run_out, run_fixed_lm, run_moving_lm, run_id = "pair";
  auto* run = app.add_subcommand("run", "full pipeline for one pair");
  run->add_option("--fixed", run_fixed, "fixed image")->required();
  run->add_option("--moving", run_moving, "moving image")->required();
  run->add_option("--fixed-landmarks", run_fixed_lm, "fixed landmark CSV");
  run->add_option("--moving-landmarks", run_moving_lm, "moving landmark CSV");
  run->add_option("--out-dir", run_out, "output directory")->required();
  run->add_option("--pair-id", run_id, "pair identifier")->capture_default_str();
  run_params.add_to(run);
  run_stains.add_to(run);

  // sweep
  ParamArgs sw_params;
  StainArgs sw_stains;
  std::string sw_manifest, sw_ss, sw_st, sw_out, sw_work;
  int sw_jobs = 1;
  auto* sw = app.add_subcommand("sweep", "grid search over sigma_s x sigma_t");
  sw->add_option("--manifest", sw_manifest, "pair manifest CSV")->required();
  sw->add_option("--sigma-s-values", sw_ss, "comma-separated sigma_s values")->required();
  sw->add_option("--sigma-t-values", sw_st, "comma-separated sigma_t values")->required();
  sw->add_option("--out", sw_out, "sweep CSV output")->required();
  sw->add_option("--work-dir", sw_work, "per-cell output root (default: <out>.d)");
  sw->add_option("--jobs", sw_jobs, "pairs registered concurrently")->capture_default_str();
  sw_params.add_to(sw);
  sw_stains.add_to(sw);

  try
  {
    app.parse(argc, argv);
  }
  catch (const CLI::ParseError& e)
  {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try
  {
    if (pre->parsed())
    {
      PreprocessInputs in;
      in.fixed_image = pre_fixed;
      in.moving_image = pre_moving;
      in.fixed_landmarks = optional_path(pre_fixed_lm);
      in.moving_landmarks = optional_path(pre_moving_lm);
      pre_stains.apply(in);
      const RegistrationParams params = pre_params.resolve();
      for (const auto& p : {std::optional<std::string>(in.fixed_image), std::optional<std::string>(in.moving_image),
                            in.fixed_landmarks, in.moving_landmarks})
        if (p)
          require_exists(*p);
      const PreprocessedPair pair = run_preprocess_stage(in, params, pre_out);
      std::cout << format_key_values(provenance_record(pair));
    }
    else if (aff->parsed())
    {
      const RegistrationParams params = aff_params.resolve();
      const PreprocessedPair pair = load_preprocessed(aff_dir);
      const AffineResult res = register_affine(pair, params);
      write_affine(aff_out.empty() ? join_path(aff_dir, files::affine) : aff_out, res.transform);
      std::cout << "init_value=" << format_exact(res.init_value) << "\nfinal_value=" << format_exact(res.final_value)
                << "\nevaluations=" << res.n_evals << "\n";
    }
    else if (dif->parsed())
    {
      const RegistrationParams params = dif_params.resolve();
      const PreprocessedPair pair = load_preprocessed(dif_dir);
      const std::string affine_path = dif_affine.empty() ? join_path(dif_dir, files::affine) : dif_affine;
      require_exists(affine_path);
      const DiffeoResult res = run_diffeo(pair, read_affine(affine_path), params);
      write_field(dif_out.empty() ? join_path(dif_dir, files::field) : dif_out, res.field);
      std::cout << "min_jacobian=" << format_exact(res.min_jacobian) << "\n";
      for (std::size_t i = 0; i < res.per_level_values.size(); ++i)
        std::cout << "value_level" << i << "=" << format_exact(res.per_level_values[i]) << "\n";
    }
    else if (apl->parsed())
    {
      require_exists(app_affine);
      require_exists(app_field);
      const TotalTransform t{read_affine(app_affine), read_field(app_field)};
      if (!app_image.empty())
      {
        const ScalarImage moving = read_scalar_image(app_image);
        if (!t.field.same_size(moving))
          throw InvalidArgument("image and field sizes differ");
        write_image(app_out, apply_transform(moving, t));
      }
      else if (!app_landmarks.empty())
        write_landmarks(app_out, map_landmarks(read_landmarks(app_landmarks), t));
      else
        throw InvalidArgument("apply needs --image or --landmarks");
    }
    else if (ev->parsed())
    {
      const PairScore s =
          score_pair(read_landmarks(ev_target), read_landmarks(ev_before), read_landmarks(ev_after), ev_w, ev_h);
      atomic_write(ev_out, format_scores_csv({{ev_id, s}}));
      std::cout << format_summary(aggregate({s})) << "\n";
    }
    else if (run->parsed())
    {
      RunInputs in;
      in.pair_id = run_id;
      in.out_dir = run_out;
      in.preprocess.fixed_image = run_fixed;
      in.preprocess.moving_image = run_moving;
      in.preprocess.fixed_landmarks = optional_path(run_fixed_lm);
      in.preprocess.moving_landmarks = optional_path(run_moving_lm);
      run_stains.apply(in.preprocess);
      const RunOutcome out = run_pair(in, run_params.resolve());
      std::cout << format_key_values(out.manifest);
      if (out.score)
        std::cout << format_summary(aggregate({*out.score})) << "\n";
    }
    else if (sw->parsed())
    {
      PreprocessInputs options;
      sw_stains.apply(options);
      const auto pairs = read_pair_manifest(sw_manifest);
      const auto rows = run_sweep(pairs, parse_double_list(sw_ss), parse_double_list(sw_st), sw_params.resolve(),
                                  sw_work.empty() ? sw_out + ".d" : sw_work, options, sw_jobs);
      atomic_write(sw_out, format_sweep_csv(rows));
      int rc = 0;
      for (const auto& r : rows)
        if (r.status != 0)
        {
          std::cerr << "cell sigma_s=" << r.sigma_s << " sigma_t=" << r.sigma_t << " failed: " << r.error << "\n";
          rc = 3;
        }
      std::cout << format_sweep_csv(rows);
      return rc;
    }
  }
  catch (const std::exception& e)
  {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return 0;
}
