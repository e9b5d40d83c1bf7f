// Command-line front end: mask generation, training, imputation, metric
// evaluation and information curves over the library pipeline.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pcvae/pcvae.hpp"

namespace fs = std::filesystem;
using namespace pcvae;

namespace {

struct EffectiveData {
  Dataset data;          // raw units
  MaskPattern observed;  // mask file AND cells present in the data file
};

EffectiveData load_data_with_mask(const std::string& data_path, bool header,
                                  const std::string& mask_path) {
  EffectiveData out;
  LoadedCsv raw = load_csv(data_path, header);
  out.data = std::move(raw.data);
  out.observed = std::move(raw.observed);
  if (!mask_path.empty()) {
    MaskPattern file_mask = read_mask_csv(mask_path);
    if (!file_mask.m.same_shape(out.observed.m))
      throw DataError("mask shape " + file_mask.m.shape_str() +
                      " does not match data shape " +
                      out.observed.m.shape_str());
    for (std::size_t i = 0; i < file_mask.m.size(); ++i)
      out.observed.m.v[i] *= file_mask.m.v[i];
  }
  return out;
}

std::vector<std::size_t> read_rows_file(const std::string& path) {
  LoadedCsv raw = load_csv(path, false);
  if (raw.data.d() != 1) throw ParseError(path + ": expected one column");
  std::vector<std::size_t> rows;
  rows.reserve(raw.data.n());
  for (std::size_t i = 0; i < raw.data.n(); ++i) {
    double v = raw.data.values.at(i, 0);
    if (v < 0 || v != std::floor(v))
      throw ParseError(path + ": row indices must be non-negative integers");
    rows.push_back(static_cast<std::size_t>(v));
  }
  return rows;
}

void write_rows_file(const std::vector<std::size_t>& rows,
                     const std::string& path,
                     const std::vector<std::string>& comments) {
  Tensor col({rows.size(), 1});
  for (std::size_t i = 0; i < rows.size(); ++i)
    col.at(i, 0) = static_cast<double>(rows[i]);
  write_matrix_csv(col, path, comments);
}

std::string args_hash(const nlohmann::json& j) {
  return hash_hex(fnv1a(j.dump()));
}

std::uint64_t env_seed_override(std::uint64_t fallback) {
  const char* env = std::getenv("CVAE_SEED");
  if (!env || !*env) return fallback;
  char* end = nullptr;
  unsigned long long v = std::strtoull(env, &end, 10);
  if (end == env || *end != '\0')
    throw ConfigError("CVAE_SEED is not an unsigned integer");
  return static_cast<std::uint64_t>(v);
}

// ---------------------------------------------------------------- genmask

struct GenmaskArgs {
  std::string mechanism = "mcar";
  double rate = -1.0;
  std::uint64_t seed = 1;
  std::string data;
  std::string out;
  bool header = false;
};

void run_genmask(const GenmaskArgs& a) {
  LoadedCsv raw = load_csv(a.data, a.header);
  MaskPattern mask;
  if (a.mechanism == "mcar") {
    if (a.rate < 0.0 || a.rate > 1.0)
      throw ConfigError("--rate must lie in [0,1] for mcar");
    Rng rng(derive_seed(a.seed, 0x6d636172ULL));
    mask = sample_mcar_mask(raw.data.n(), raw.data.d(), a.rate, rng);
  } else if (a.mechanism == "self-censor") {
    mask = self_censoring_mask(raw.data.values);
  } else {
    throw ConfigError("--mechanism must be mcar or self-censor");
  }
  // cells absent from the data file stay missing
  for (std::size_t i = 0; i < mask.m.size(); ++i)
    mask.m.v[i] *= raw.observed.m.v[i];

  nlohmann::json meta{{"cmd", "genmask"},
                      {"mechanism", a.mechanism},
                      {"rate", a.rate},
                      {"seed", a.seed},
                      {"data", a.data}};
  write_mask_csv(mask, a.out,
                 {"config_hash=" + args_hash(meta) +
                  " seed=" + std::to_string(a.seed)});
  std::cout << "wrote " << a.out << "; realized missing fraction "
            << format_double(1.0 - mask.observed_fraction()) << "\n";
}

// ------------------------------------------------------------------ train

struct TrainArgs {
  std::string config;
  std::string data;
  std::string mask;
  std::string out_dir;
  bool no_timing = false;
};

void run_train(const TrainArgs& a) {
  RunConfig cfg = RunConfig::load(a.config);
  if (!a.data.empty()) cfg.data_path = a.data;
  if (!a.mask.empty()) cfg.mask_path = a.mask;
  if (!a.out_dir.empty()) cfg.out_dir = a.out_dir;
  if (cfg.data_path.empty()) throw ConfigError("no data path given");
  if (cfg.out_dir.empty()) throw ConfigError("no output directory given");
  cfg.train.seed = env_seed_override(cfg.train.seed);
  if (a.no_timing) cfg.train.record_timing = false;
  for (const std::string& w : cfg.train.validate())
    std::cerr << "warning: " << w << "\n";

  EffectiveData eff =
      load_data_with_mask(cfg.data_path, cfg.data_header, cfg.mask_path);
  fs::create_directories(cfg.out_dir);
  std::string hash = cfg.hash();
  std::vector<std::string> comments{
      "config_hash=" + hash + " seed=" + std::to_string(cfg.train.seed)};

  Dataset train_data = eff.data;
  MaskPattern train_mask = eff.observed;
  if (cfg.test_fraction > 0.0) {
    SplitIndices idx = split(eff.data.n(), cfg.test_fraction, cfg.split_seed);
    write_rows_file(idx.test,
                    (fs::path(cfg.out_dir) / "test_rows.csv").string(),
                    comments);
    train_data = take_rows(eff.data, idx.train);
    train_mask = take_rows(eff.observed, idx.train);
  }
  auto [scaled, info] = minmax_scale(train_data, train_mask);

  fs::path out_dir(cfg.out_dir);
  CheckpointSink sink = [&](std::size_t epoch, const Model& m,
                            const TrainLog&) {
    std::string name =
        epoch == cfg.train.epochs
            ? "checkpoint.json"
            : "checkpoint_epoch" + std::to_string(epoch) + ".json";
    save_checkpoint(m, (out_dir / name).string(), hash, cfg.train.seed);
  };
  TrainResult result = train(cfg.train, scaled, train_mask, sink);

  std::ofstream log((out_dir / "trainlog.csv").string());
  if (!log) throw DataError("cannot write trainlog.csv");
  log << result.log.to_csv(comments);
  if (!result.log.epochs.empty())
    std::cout << "final epoch loss "
              << format_double(result.log.epochs.back().loss) << "\n";
  std::cout << "wrote " << (out_dir / "checkpoint.json").string() << "\n";
}

// ------------------------------------------------------------------- eval

struct EvalArgs {
  std::string model;
  std::string data;
  std::string mask;
  std::string truth;
  std::string metrics = "rmse,nll,elbo";
  std::string out;
  std::string rows;
  std::string dataset_name;
  std::size_t samples = 100;
  std::uint64_t seed = 1;
  std::size_t jobs = 1;
  bool header = false;
  bool raw_units = false;
};

void run_eval(const EvalArgs& a) {
  bool want_rmse = a.metrics.find("rmse") != std::string::npos;
  bool want_nll = a.metrics.find("nll") != std::string::npos;
  bool want_elbo = a.metrics.find("elbo") != std::string::npos;
  if (!want_rmse && !want_nll && !want_elbo)
    throw ConfigError("--metrics must name at least one of rmse,nll,elbo");
  if ((want_rmse || want_nll) && a.truth.empty())
    throw ConfigError("rmse and nll need --truth");

  LoadedCheckpoint ckpt = load_checkpoint(a.model);
  const Model& model = ckpt.model;
  EffectiveData eff = load_data_with_mask(a.data, a.header, a.mask);
  Dataset data = eff.data;
  MaskPattern mask = eff.observed;
  std::optional<Dataset> truth_raw;
  if (!a.truth.empty()) {
    LoadedCsv t = load_csv(a.truth, a.header);
    if (t.observed.observed_count() != t.observed.m.size())
      throw DataError(a.truth +
                      " has missing cells; ground truth must be complete");
    truth_raw = std::move(t.data);
  }
  if (!a.rows.empty()) {
    std::vector<std::size_t> rows = read_rows_file(a.rows);
    data = take_rows(data, rows);
    mask = take_rows(mask, rows);
    if (truth_raw) *truth_raw = take_rows(*truth_raw, rows);
  }
  if (truth_raw && !truth_raw->values.same_shape(data.values))
    throw DataError("truth shape does not match data shape");

  Dataset scaled = apply_scale(data, model.scale);
  std::optional<Dataset> truth_scaled;
  if (truth_raw) truth_scaled = apply_scale(*truth_raw, model.scale);

  MetricsRecord rec;
  rec.dataset = a.dataset_name.empty() ? fs::path(a.data).stem().string()
                                       : a.dataset_name;
  rec.model = to_string(model.kind);
  rec.seed = a.seed;
  rec.missing_rate = 1.0 - mask.observed_fraction();

  if (want_rmse) {
    Tensor imputed = impute_all(model, scaled, mask, a.samples,
                                derive_seed(a.seed, 0x726d7365ULL), a.jobs);
    if (a.raw_units) {
      Tensor imp_raw = imputed;
      for (std::size_t i = 0; i < imp_raw.rows(); ++i)
        for (std::size_t j = 0; j < imp_raw.cols(); ++j)
          imp_raw.at(i, j) = model.scale.unscale(j, imputed.at(i, j));
      rec.rmse = rmse_missing(imp_raw, truth_raw->values, mask);
    } else {
      rec.rmse = rmse_missing(imputed, truth_scaled->values, mask);
    }
  }
  if (want_nll) {
    std::vector<double> per_row(scaled.n(), 0.0);
    parallel_rows(scaled.n(), a.jobs, [&](std::size_t i) {
      Rng rng(derive_seed(a.seed, 0x6e6c6cULL, i));
      per_row[i] = neg_expected_llh(model, scaled.row(i), mask.row(i),
                                    truth_scaled->row(i), a.samples, rng);
    });
    double acc = 0.0;
    for (double v : per_row) acc += v;
    rec.neg_llh = acc / static_cast<double>(scaled.n());
  }
  if (want_elbo)
    rec.elbo = test_elbo(model, scaled, mask, a.samples,
                         derive_seed(a.seed, 0x656c626fULL));

  std::vector<std::string> comments{"config_hash=" + ckpt.config_hash +
                                    " seed=" + std::to_string(a.seed)};
  if (!a.out.empty()) append_metrics_csv(a.out, rec, comments);
  std::cout << MetricsRecord::csv_header() << "\n" << rec.to_csv_row() << "\n";
}

// ----------------------------------------------------------------- impute

struct ImputeArgs {
  std::string model;
  std::string data;
  std::string mask;
  std::string out;
  std::string rows;
  std::size_t samples = 100;
  std::uint64_t seed = 1;
  std::size_t jobs = 1;
  bool header = false;
};

void run_impute(const ImputeArgs& a) {
  LoadedCheckpoint ckpt = load_checkpoint(a.model);
  const Model& model = ckpt.model;
  EffectiveData eff = load_data_with_mask(a.data, a.header, a.mask);
  Dataset data = eff.data;
  MaskPattern mask = eff.observed;
  if (!a.rows.empty()) {
    std::vector<std::size_t> rows = read_rows_file(a.rows);
    data = take_rows(data, rows);
    mask = take_rows(mask, rows);
  }
  Dataset scaled = apply_scale(data, model.scale);
  Tensor imputed = impute_all(model, scaled, mask, a.samples,
                              derive_seed(a.seed, 0x696d70ULL), a.jobs);
  // observed cells keep the raw input values bit for bit; filled cells are
  // mapped back to raw units
  Tensor out = data.values;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j)
      if (!mask.observed(i, j))
        out.at(i, j) = model.scale.unscale(j, imputed.at(i, j));
  write_matrix_csv(out, a.out,
                   {"config_hash=" + ckpt.config_hash +
                    " seed=" + std::to_string(a.seed)},
                   data.columns);
  std::cout << "wrote " << a.out << "\n";
}

// --------------------------------------------------------------------- ic

struct IcArgs {
  std::string model;
  std::string data;
  std::string out;
  std::string svg;
  std::vector<std::string> overlays;
  std::string rows;
  std::size_t target_col = 0;
  std::size_t steps = 8;
  std::size_t samples = 100;
  std::size_t s_outer = 10;
  std::uint64_t seed = 1;
  std::size_t jobs = 1;
  bool header = false;
};

struct IcCsv {
  std::string label;
  std::vector<double> steps;
  std::vector<double> errors;
};

IcCsv read_ic_csv(const std::string& path) {
  LoadedCsv raw = load_csv(path, true);
  if (raw.data.d() < 2) throw ParseError(path + ": expected IC columns");
  IcCsv out;
  out.label = fs::path(path).stem().string();
  for (std::size_t i = 0; i < raw.data.n(); ++i) {
    out.steps.push_back(raw.data.values.at(i, 0));
    out.errors.push_back(raw.data.values.at(i, 1));
  }
  return out;
}

void run_ic(const IcArgs& a) {
  LoadedCheckpoint ckpt = load_checkpoint(a.model);
  const Model& model = ckpt.model;
  LoadedCsv raw = load_csv(a.data, a.header);
  if (raw.observed.observed_count() != raw.observed.m.size())
    throw DataError(a.data +
                    " has missing cells; information curves need complete "
                    "ground truth");
  if (a.target_col >= raw.data.d())
    throw ConfigError("--target-col out of range for " +
                      std::to_string(raw.data.d()) + " columns");
  Dataset data = raw.data;
  if (!a.rows.empty()) data = take_rows(data, read_rows_file(a.rows));
  Dataset scaled = apply_scale(data, model.scale);

  InformationCurve curve = information_curve(
      model, scaled, a.target_col, a.steps, a.s_outer, a.samples, a.seed,
      a.jobs);

  std::string provenance =
      "config_hash=" + ckpt.config_hash + " seed=" + std::to_string(a.seed);
  std::ofstream out(a.out);
  if (!out) throw DataError("cannot write " + a.out);
  out << "# " << provenance << "\n";
  out << "step,mean_sq_error,std_error,rmse\n";
  for (std::size_t s = 0; s < curve.steps(); ++s)
    out << s << ',' << format_double(curve.mean_sq_error[s]) << ','
        << format_double(curve.std_error[s]) << ','
        << format_double(curve.rmse[s]) << '\n';
  out.close();
  std::cout << "wrote " << a.out << "\n";

  if (!a.svg.empty()) {
    std::vector<SvgSeries> series;
    SvgSeries mine;
    mine.label = fs::path(a.out).stem().string();
    for (std::size_t s = 0; s < curve.steps(); ++s) {
      mine.xs.push_back(static_cast<double>(s));
      mine.ys.push_back(curve.mean_sq_error[s]);
    }
    series.push_back(std::move(mine));
    for (const std::string& overlay : a.overlays) {
      IcCsv other = read_ic_csv(overlay);
      series.push_back({other.label, other.steps, other.errors});
    }
    std::ofstream svg(a.svg);
    if (!svg) throw DataError("cannot write " + a.svg);
    svg << render_line_svg(series, "steps", "error", provenance);
    std::cout << "wrote " << a.svg << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Variational autoencoders for tabular data with missing values: "
      "training with posterior-consistency regularization, imputation "
      "metrics and active feature acquisition"};
  app.require_subcommand(1);

  GenmaskArgs gm;
  CLI::App* genmask =
      app.add_subcommand("genmask", "Generate an observation mask");
  genmask->add_option("--mechanism", gm.mechanism, "mcar or self-censor");
  genmask->add_option("--rate", gm.rate, "missing rate for mcar");
  genmask->add_option("--seed", gm.seed, "rng seed");
  genmask->add_option("--data", gm.data, "input data CSV")->required();
  genmask->add_option("--out", gm.out, "output mask CSV")->required();
  genmask->add_flag("--header", gm.header, "data file has a header row");

  TrainArgs tr;
  CLI::App* train_cmd =
      app.add_subcommand("train", "Train a model from a run config");
  train_cmd->add_option("--config", tr.config, "TOML or JSON run config")
      ->required();
  train_cmd->add_option("--data", tr.data, "override config data path");
  train_cmd->add_option("--mask", tr.mask, "override config mask path");
  train_cmd->add_option("--out-dir", tr.out_dir, "override output directory");
  train_cmd->add_flag("--no-timing", tr.no_timing,
                      "write zero wall-time in the train log");

  EvalArgs ev;
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "Compute imputation metrics for a model");
  eval_cmd->add_option("--model", ev.model, "checkpoint path")->required();
  eval_cmd->add_option("--data", ev.data, "data CSV")->required();
  eval_cmd->add_option("--mask", ev.mask, "observation mask CSV");
  eval_cmd->add_option("--truth", ev.truth, "complete ground-truth CSV");
  eval_cmd->add_option("--metrics", ev.metrics, "subset of rmse,nll,elbo");
  eval_cmd->add_option("--out", ev.out, "results CSV to append to");
  eval_cmd->add_option("--rows", ev.rows, "CSV of row indices to evaluate");
  eval_cmd->add_option("--dataset-name", ev.dataset_name,
                       "dataset label for the results row");
  eval_cmd->add_option("--samples", ev.samples, "posterior samples");
  eval_cmd->add_option("--seed", ev.seed, "rng seed");
  eval_cmd->add_option("--jobs", ev.jobs, "parallelize across rows");
  eval_cmd->add_flag("--header", ev.header, "data file has a header row");
  eval_cmd->add_flag("--raw-units", ev.raw_units,
                     "report rmse in raw data units");

  ImputeArgs im;
  CLI::App* impute_cmd =
      app.add_subcommand("impute", "Fill missing cells with the model");
  impute_cmd->add_option("--model", im.model, "checkpoint path")->required();
  impute_cmd->add_option("--data", im.data, "data CSV")->required();
  impute_cmd->add_option("--mask", im.mask, "observation mask CSV");
  impute_cmd->add_option("--out", im.out, "imputed CSV")->required();
  impute_cmd->add_option("--rows", im.rows, "CSV of row indices");
  impute_cmd->add_option("--samples", im.samples, "posterior samples");
  impute_cmd->add_option("--seed", im.seed, "rng seed");
  impute_cmd->add_option("--jobs", im.jobs, "parallelize across rows");
  impute_cmd->add_flag("--header", im.header, "data file has a header row");

  IcArgs ic;
  CLI::App* ic_cmd =
      app.add_subcommand("ic", "Greedy information curve for a target column");
  ic_cmd->add_option("--model", ic.model, "checkpoint path")->required();
  ic_cmd->add_option("--data", ic.data, "complete ground-truth CSV")
      ->required();
  ic_cmd->add_option("--target-col", ic.target_col, "target column index")
      ->required();
  ic_cmd->add_option("--steps", ic.steps, "acquisition steps");
  ic_cmd->add_option("--samples", ic.samples, "imputation samples");
  ic_cmd->add_option("--s-outer", ic.s_outer, "outer predictive samples");
  ic_cmd->add_option("--seed", ic.seed, "rng seed");
  ic_cmd->add_option("--out", ic.out, "curve CSV")->required();
  ic_cmd->add_option("--svg", ic.svg, "optional SVG plot");
  ic_cmd->add_option("--overlay", ic.overlays,
                     "additional IC CSVs to draw into the SVG");
  ic_cmd->add_option("--rows", ic.rows, "CSV of row indices");
  ic_cmd->add_option("--jobs", ic.jobs, "parallelize across rows");
  ic_cmd->add_flag("--header", ic.header, "data file has a header row");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*genmask) run_genmask(gm);
    if (*train_cmd) run_train(tr);
    if (*eval_cmd) run_eval(ev);
    if (*impute_cmd) run_impute(im);
    if (*ic_cmd) run_ic(ic);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
