#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "pcvae/pcvae.hpp"

using namespace pcvae;
namespace fs = std::filesystem;

namespace {

std::string bin() {
  const char* b = std::getenv("PCVAE_BIN");
  REQUIRE(b != nullptr);
  return b;
}

std::string golden_dir() {
  const char* d = std::getenv("PCVAE_GOLDEN_DIR");
  REQUIRE(d != nullptr);
  return d;
}

int run(const std::string& cmd) {
  int status = std::system((cmd + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

int run_capture(const std::string& cmd, const std::string& out_file) {
  int status =
      std::system((cmd + " >" + out_file + " 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Workspace {
  fs::path dir;
  Workspace() {
    dir = fs::temp_directory_path() /
          ("pcvae_cli_" + std::to_string(::getpid()) + "_" +
           std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(dir);
  }
  ~Workspace() { std::error_code ec; fs::remove_all(dir, ec); }
  std::string file(const std::string& name) const {
    return (dir / name).string();
  }
};

/// 32-row synthetic table shared by the CLI tests; the golden run trains
/// on the committed copy of exactly this data.
void write_toy_data(const std::string& path) {
  Rng rng(424242);
  std::ofstream out(path);
  for (int i = 0; i < 32; ++i) {
    double a = rng.uniform(0.0, 1.0);
    double b = rng.uniform(0.0, 1.0);
    out << format_double(a) << ',' << format_double(0.7 * a + 0.3 * b) << ','
        << format_double(b) << ','
        << format_double(0.5 + 0.2 * a - 0.1 * b) << '\n';
  }
}

void write_toy_config(const std::string& path, bool reg, double lambda,
                      int epochs) {
  std::ofstream out(path);
  out << "[model]\n"
      << "kind = \"zi\"\n"
      << "latent_dim = 2\n"
      << "enc_hidden = [8]\n"
      << "dec_hidden = [8]\n\n"
      << "[reg]\n"
      << "enabled = " << (reg ? "true" : "false") << "\n"
      << "lambda = " << lambda << "\n"
      << "mechanism = \"uniform\"\n"
      << "p_remove = 0.3\n\n"
      << "[train]\n"
      << "epochs = " << epochs << "\n"
      << "batch = 8\n"
      << "seed = 11\n";
}

std::vector<std::vector<std::string>> parse_csv_body(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
      if (c == ',') {
        cells.push_back(cur);
        cur.clear();
      } else
        cur.push_back(c);
    }
    cells.push_back(cur);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_CASE("genmask endpoints, determinism and usage errors") {
  Workspace ws;
  write_toy_data(ws.file("data.csv"));

  REQUIRE(run(bin() + " genmask --mechanism mcar --rate 0.0 --seed 3 --data " +
              ws.file("data.csv") + " --out " + ws.file("m0.csv")) == 0);
  MaskPattern m0 = read_mask_csv(ws.file("m0.csv"));
  REQUIRE(m0.observed_count() == m0.m.size());

  REQUIRE(run(bin() + " genmask --mechanism mcar --rate 0.4 --seed 3 --data " +
              ws.file("data.csv") + " --out " + ws.file("a.csv")) == 0);
  REQUIRE(run(bin() + " genmask --mechanism mcar --rate 0.4 --seed 3 --data " +
              ws.file("data.csv") + " --out " + ws.file("b.csv")) == 0);
  REQUIRE(slurp(ws.file("a.csv")) == slurp(ws.file("b.csv")));

  // invalid rate is a usage error
  REQUIRE(run(bin() + " genmask --mechanism mcar --rate 1.5 --seed 3 --data " +
              ws.file("data.csv") + " --out " + ws.file("x.csv")) == 2);
  REQUIRE(run(bin() + " genmask --mechanism nope --rate 0.3 --seed 3 --data " +
              ws.file("data.csv") + " --out " + ws.file("x.csv")) == 2);

  // realized fraction is printed
  REQUIRE(run_capture(bin() +
                          " genmask --mechanism mcar --rate 0.4 --seed 5 "
                          "--data " +
                          ws.file("data.csv") + " --out " + ws.file("c.csv"),
                      ws.file("stdout.txt")) == 0);
  REQUIRE(slurp(ws.file("stdout.txt")).find("realized missing fraction") !=
          std::string::npos);
}

TEST_CASE("genmask self-censor matches the library rule") {
  Workspace ws;
  {
    std::ofstream out(ws.file("two.csv"));
    out << "0.2,0.5\n0.8,0.5\n";
  }
  REQUIRE(run(bin() + " genmask --mechanism self-censor --data " +
              ws.file("two.csv") + " --out " + ws.file("sc.csv")) == 0);
  MaskPattern sc = read_mask_csv(ws.file("sc.csv"));
  REQUIRE(sc.observed(0, 0));
  REQUIRE_FALSE(sc.observed(1, 0));  // 0.8 above the column mean 0.5
  REQUIRE(sc.observed(0, 1));        // constant column stays observed
  REQUIRE(sc.observed(1, 1));
}

TEST_CASE("train with zero epochs keeps the initialization") {
  Workspace ws;
  write_toy_data(ws.file("data.csv"));
  write_toy_config(ws.file("cfg.toml"), false, 0.0, 0);
  REQUIRE(run(bin() + " genmask --mechanism mcar --rate 0.3 --seed 2 --data " +
              ws.file("data.csv") + " --out " + ws.file("mask.csv")) == 0);
  std::string cmd = bin() + " train --config " + ws.file("cfg.toml") +
                    " --data " + ws.file("data.csv") + " --mask " +
                    ws.file("mask.csv") + " --no-timing --out-dir ";
  REQUIRE(run(cmd + ws.file("run1")) == 0);
  REQUIRE(run(cmd + ws.file("run2")) == 0);
  REQUIRE(slurp(ws.file("run1") + "/checkpoint.json") ==
          slurp(ws.file("run2") + "/checkpoint.json"));
  // empty epoch log: comments + header only
  auto rows = parse_csv_body(slurp(ws.file("run1") + "/trainlog.csv"));
  REQUIRE(rows.size() == 1);  // header only
}

TEST_CASE("regularized train log shows a zero bracket at lambda 0") {
  Workspace ws;
  write_toy_data(ws.file("data.csv"));
  write_toy_config(ws.file("cfg.toml"), true, 0.0, 3);
  REQUIRE(run(bin() + " genmask --mechanism mcar --rate 0.3 --seed 2 --data " +
              ws.file("data.csv") + " --out " + ws.file("mask.csv")) == 0);
  REQUIRE(run(bin() + " train --config " + ws.file("cfg.toml") + " --data " +
              ws.file("data.csv") + " --mask " + ws.file("mask.csv") +
              " --no-timing --out-dir " + ws.file("run")) == 0);
  auto rows = parse_csv_body(slurp(ws.file("run") + "/trainlog.csv"));
  REQUIRE(rows.size() == 4);  // header + 3 epochs
  REQUIRE(rows[0][0] == "epoch");
  REQUIRE(rows[0][1] == "loss");
  REQUIRE(rows[0][2] == "elbo_q");
  for (std::size_t r = 1; r < rows.size(); ++r) {
    double loss = std::stod(rows[r][1]);
    double elbo_q = std::stod(rows[r][2]);
    REQUIRE(loss == Catch::Approx(-elbo_q).margin(1e-12));
  }
}

TEST_CASE("golden run: 5 epochs on the bundled 32-row table") {
  Workspace ws;
  write_toy_data(ws.file("data.csv"));
  // the committed inputs must equal what this test regenerates
  REQUIRE(slurp(ws.file("data.csv")) ==
          slurp(golden_dir() + std::string("/golden_data.csv")));
  REQUIRE(run(bin() + " genmask --mechanism mcar --rate 0.3 --seed 2 --data " +
              ws.file("data.csv") + " --out " + ws.file("mask.csv")) == 0);
  REQUIRE(run(bin() + " train --config " + golden_dir() +
              std::string("/golden_config.toml") + " --data " +
              ws.file("data.csv") + " --mask " + ws.file("mask.csv") +
              " --no-timing --out-dir " + ws.file("run")) == 0);
  REQUIRE(slurp(ws.file("run") + "/trainlog.csv") ==
          slurp(golden_dir() + std::string("/golden_trainlog.csv")));
}

TEST_CASE("config errors carry the field path and exit 2") {
  Workspace ws;
  write_toy_data(ws.file("data.csv"));
  {
    std::ofstream out(ws.file("bad.toml"));
    out << "[train]\nepochs = 1\nbogus_knob = 3\n";
  }
  REQUIRE(run(bin() + " genmask --mechanism mcar --rate 0.3 --seed 2 --data " +
              ws.file("data.csv") + " --out " + ws.file("mask.csv")) == 0);
  std::string cmd = bin() + " train --config " + ws.file("bad.toml") +
                    " --data " + ws.file("data.csv") + " --mask " +
                    ws.file("mask.csv") + " --out-dir " + ws.file("run");
  REQUIRE(run_capture(cmd, ws.file("err.txt")) == 2);
  REQUIRE(slurp(ws.file("err.txt")).find("train.bogus_knob") !=
          std::string::npos);
}

TEST_CASE("CVAE_SEED overrides the config seed") {
  Workspace ws;
  write_toy_data(ws.file("data.csv"));
  write_toy_config(ws.file("cfg.toml"), false, 0.0, 1);
  REQUIRE(run(bin() + " genmask --mechanism mcar --rate 0.3 --seed 2 --data " +
              ws.file("data.csv") + " --out " + ws.file("mask.csv")) == 0);
  std::string cmd = "CVAE_SEED=777 " + bin() + " train --config " +
                    ws.file("cfg.toml") + " --data " + ws.file("data.csv") +
                    " --mask " + ws.file("mask.csv") + " --no-timing " +
                    "--out-dir " + ws.file("run");
  REQUIRE(run(cmd) == 0);
  LoadedCheckpoint ckpt = load_checkpoint(ws.file("run") + "/checkpoint.json");
  REQUIRE(ckpt.seed == 777);
}

TEST_CASE("eval pipeline: fixtures, metric subsets, library equality") {
  Workspace ws;
  write_toy_data(ws.file("data.csv"));
  write_toy_config(ws.file("cfg.toml"), false, 0.0, 3);
  REQUIRE(run(bin() + " genmask --mechanism mcar --rate 0.3 --seed 2 --data " +
              ws.file("data.csv") + " --out " + ws.file("mask.csv")) == 0);
  REQUIRE(run(bin() + " train --config " + ws.file("cfg.toml") + " --data " +
              ws.file("data.csv") + " --mask " + ws.file("mask.csv") +
              " --no-timing --out-dir " + ws.file("run")) == 0);
  std::string model = ws.file("run") + "/checkpoint.json";

  // perfect-imputation fixture: nothing missing, rmse exactly 0
  REQUIRE(run(bin() + " genmask --mechanism mcar --rate 0.0 --seed 2 --data " +
              ws.file("data.csv") + " --out " + ws.file("full.csv")) == 0);
  REQUIRE(run(bin() + " eval --model " + model + " --data " +
              ws.file("data.csv") + " --mask " + ws.file("full.csv") +
              " --truth " + ws.file("data.csv") + " --metrics rmse --out " +
              ws.file("r0.csv")) == 0);
  auto rows0 = parse_csv_body(slurp(ws.file("r0.csv")));
  REQUIRE(rows0.size() == 2);
  REQUIRE(std::stod(rows0[1][7]) == 0.0);

  // metric subset: only elbo populated, truth not needed
  REQUIRE(run(bin() + " eval --model " + model + " --data " +
              ws.file("data.csv") + " --mask " + ws.file("mask.csv") +
              " --metrics elbo --seed 5 --samples 20 --out " +
              ws.file("r1.csv")) == 0);
  auto rows1 = parse_csv_body(slurp(ws.file("r1.csv")));
  REQUIRE(rows1[1][7].empty());   // rmse skipped
  REQUIRE(rows1[1][8].empty());   // nll skipped
  REQUIRE_FALSE(rows1[1][9].empty());

  // rmse without truth is a usage error
  REQUIRE(run(bin() + " eval --model " + model + " --data " +
              ws.file("data.csv") + " --mask " + ws.file("mask.csv") +
              " --metrics rmse") == 2);

  // full metrics equal the library pipeline bit for bit
  REQUIRE(run(bin() + " eval --model " + model + " --data " +
              ws.file("data.csv") + " --mask " + ws.file("mask.csv") +
              " --truth " + ws.file("data.csv") +
              " --metrics rmse,nll,elbo --seed 9 --samples 25 --out " +
              ws.file("r2.csv")) == 0);
  auto rows2 = parse_csv_body(slurp(ws.file("r2.csv")));

  LoadedCheckpoint ckpt = load_checkpoint(model);
  LoadedCsv raw = load_csv(ws.file("data.csv"), false);
  MaskPattern mask = read_mask_csv(ws.file("mask.csv"));
  for (std::size_t i = 0; i < mask.m.size(); ++i)
    mask.m.v[i] *= raw.observed.m.v[i];
  Dataset scaled = apply_scale(raw.data, ckpt.model.scale);
  Tensor imputed = impute_all(ckpt.model, scaled, mask, 25,
                              derive_seed(9, 0x726d7365ULL));
  double rmse = rmse_missing(imputed, scaled.values, mask);
  REQUIRE(std::stod(rows2[1][7]) == rmse);
  double elbo = test_elbo(ckpt.model, scaled, mask, 25,
                          derive_seed(9, 0x656c626fULL));
  REQUIRE(std::stod(rows2[1][9]) == elbo);
}

TEST_CASE("impute preserves observed cells bit-exactly") {
  Workspace ws;
  write_toy_data(ws.file("data.csv"));
  write_toy_config(ws.file("cfg.toml"), false, 0.0, 2);
  REQUIRE(run(bin() + " genmask --mechanism mcar --rate 0.4 --seed 6 --data " +
              ws.file("data.csv") + " --out " + ws.file("mask.csv")) == 0);
  REQUIRE(run(bin() + " train --config " + ws.file("cfg.toml") + " --data " +
              ws.file("data.csv") + " --mask " + ws.file("mask.csv") +
              " --no-timing --out-dir " + ws.file("run")) == 0);
  REQUIRE(run(bin() + " impute --model " + ws.file("run") +
              "/checkpoint.json --data " + ws.file("data.csv") + " --mask " +
              ws.file("mask.csv") + " --samples 10 --out " +
              ws.file("imputed.csv")) == 0);

  LoadedCsv original = load_csv(ws.file("data.csv"), false);
  LoadedCsv filled = load_csv(ws.file("imputed.csv"), false);
  MaskPattern mask = read_mask_csv(ws.file("mask.csv"));
  REQUIRE(filled.observed.observed_count() == filled.observed.m.size());
  for (std::size_t i = 0; i < original.data.n(); ++i)
    for (std::size_t j = 0; j < original.data.d(); ++j)
      if (mask.observed(i, j))
        REQUIRE(filled.data.values.at(i, j) == original.data.values.at(i, j));
}

TEST_CASE("ic emits curves and well-formed SVG") {
  Workspace ws;
  write_toy_data(ws.file("data.csv"));
  write_toy_config(ws.file("cfg.toml"), false, 0.0, 2);
  REQUIRE(run(bin() + " genmask --mechanism mcar --rate 0.3 --seed 2 --data " +
              ws.file("data.csv") + " --out " + ws.file("mask.csv")) == 0);
  REQUIRE(run(bin() + " train --config " + ws.file("cfg.toml") + " --data " +
              ws.file("data.csv") + " --mask " + ws.file("mask.csv") +
              " --no-timing --out-dir " + ws.file("run")) == 0);
  std::string model = ws.file("run") + "/checkpoint.json";

  // steps 0: a one-row curve (plus header)
  REQUIRE(run(bin() + " ic --model " + model + " --data " +
              ws.file("data.csv") + " --target-col 3 --steps 0 --samples 8 " +
              "--s-outer 2 --out " + ws.file("ic0.csv")) == 0);
  auto rows0 = parse_csv_body(slurp(ws.file("ic0.csv")));
  REQUIRE(rows0.size() == 2);
  REQUIRE(rows0[0] ==
          std::vector<std::string>{"step", "mean_sq_error", "std_error",
                                   "rmse"});

  // target column out of range: usage error
  REQUIRE(run(bin() + " ic --model " + model + " --data " +
              ws.file("data.csv") + " --target-col 99 --steps 1 --out " +
              ws.file("bad.csv")) == 2);

  // svg with an overlay: well-formed XML with the axis labels
  REQUIRE(run(bin() + " ic --model " + model + " --data " +
              ws.file("data.csv") + " --target-col 3 --steps 2 --samples 8 " +
              "--s-outer 2 --out " + ws.file("ic1.csv") + " --svg " +
              ws.file("ic.svg") + " --overlay " + ws.file("ic0.csv")) == 0);
  std::string svg = slurp(ws.file("ic.svg"));
  REQUIRE(svg.find(">steps</text>") != std::string::npos);
  REQUIRE(svg.find(">error</text>") != std::string::npos);
  REQUIRE(svg.find("config_hash=") != std::string::npos);
  std::size_t polylines = 0;
  for (std::size_t pos = svg.find("<polyline"); pos != std::string::npos;
       pos = svg.find("<polyline", pos + 1))
    ++polylines;
  REQUIRE(polylines == 2);

  // minimal well-formedness: tags balance
  std::vector<std::string> stack;
  for (std::size_t i = 0; i < svg.size(); ++i) {
    if (svg[i] != '<') continue;
    if (svg.compare(i, 4, "<!--") == 0 || svg.compare(i, 2, "<?") == 0)
      continue;
    std::size_t close = svg.find('>', i);
    REQUIRE(close != std::string::npos);
    std::string tag = svg.substr(i + 1, close - i - 1);
    if (tag.back() == '/') continue;  // self-closing
    if (tag.front() == '/') {
      REQUIRE_FALSE(stack.empty());
      std::string name = tag.substr(1);
      REQUIRE(stack.back() == name);
      stack.pop_back();
    } else {
      stack.push_back(tag.substr(0, tag.find_first_of(" \t")));
    }
  }
  REQUIRE(stack.empty());
}

TEST_CASE("every output embeds the config hash and seed") {
  Workspace ws;
  write_toy_data(ws.file("data.csv"));
  write_toy_config(ws.file("cfg.toml"), false, 0.0, 1);
  REQUIRE(run(bin() + " genmask --mechanism mcar --rate 0.3 --seed 2 --data " +
              ws.file("data.csv") + " --out " + ws.file("mask.csv")) == 0);
  REQUIRE(slurp(ws.file("mask.csv")).find("# config_hash=") == 0);
  REQUIRE(run(bin() + " train --config " + ws.file("cfg.toml") + " --data " +
              ws.file("data.csv") + " --mask " + ws.file("mask.csv") +
              " --no-timing --out-dir " + ws.file("run")) == 0);
  REQUIRE(slurp(ws.file("run") + "/trainlog.csv").find("# config_hash=") == 0);
  std::string ckpt = slurp(ws.file("run") + "/checkpoint.json");
  REQUIRE(ckpt.find("config_hash") != std::string::npos);
  REQUIRE(ckpt.find("\"seed\": 11") != std::string::npos);
}
