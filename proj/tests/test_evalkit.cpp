#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "pcvae/evalkit.hpp"
#include "pcvae/trainer.hpp"

using namespace pcvae;

namespace {

ArchConfig tiny() {
  ArchConfig arch;
  arch.latent_dim = 2;
  arch.enc_hidden = {6};
  arch.dec_hidden = {6};
  arch.flow_layers = 2;
  arch.flow_cond_hidden = 5;
  return arch;
}

void zero_prefix(Model& m, const std::string& prefix) {
  for (std::size_t i = 0; i < m.params.count(); ++i)
    if (m.params.name(i).rfind(prefix, 0) == 0)
      for (double& e : m.params.value(i).v) e = 0.0;
}

}  // namespace

TEST_CASE("impute passes observed cells through bit-exactly") {
  Rng rng(1);
  Model m = Model::create(ModelKind::Zi, 4, tiny(), rng);
  Tensor x = Tensor::vector({0.123456789012345, 0.9, 0.5, 0.25});
  Tensor mask = Tensor::vector({1, 0, 1, 0});
  Rng irng(2);
  Tensor out = impute(m, x, mask, 16, irng);
  REQUIRE(out.v[0] == x.v[0]);
  REQUIRE(out.v[2] == x.v[2]);
  REQUIRE(out.v[1] != x.v[1]);  // replaced by the model
  REQUIRE(out.v[1] > 0.0);
  REQUIRE(out.v[1] < 1.0);
}

TEST_CASE("no missing cells: impute is the identity") {
  Rng rng(3);
  Model m = Model::create(ModelKind::Pnp, 3, tiny(), rng);
  Tensor x = Tensor::vector({0.3, 0.6, 0.9});
  Tensor mask = Tensor::full({3}, 1.0);
  Rng irng(4);
  REQUIRE(impute(m, x, mask, 8, irng).v == x.v);
}

TEST_CASE("constant decoder imputes 0.5 for any sample count") {
  Rng rng(5);
  Model m = Model::create(ModelKind::Zi, 3, tiny(), rng);
  zero_prefix(m, "dec");
  Tensor x = Tensor::vector({0.2, 0.8, 0.4});
  Tensor mask = Tensor::vector({0, 1, 0});
  for (std::size_t s : {1u, 5u, 50u}) {
    Rng irng(6);
    Tensor out = impute(m, x, mask, s, irng);
    REQUIRE(out.v[0] == 0.5);
    REQUIRE(out.v[2] == 0.5);
    REQUIRE(out.v[1] == 0.8);
  }
}

TEST_CASE("large-sample imputation approaches the z-free decoder mean") {
  // decoder ignores z (zero weights into the first layer only), so the
  // posterior average over many samples converges to one forward pass
  Rng rng(7);
  Model m = Model::create(ModelKind::Zi, 3, tiny(), rng);
  zero_prefix(m, "dec.w0");
  Tensor x = Tensor::vector({0.1, 0.2, 0.3});
  Tensor mask = Tensor::vector({0, 1, 1});
  Rng irng(8);
  Tensor big = impute(m, x, mask, 10000, irng);
  Tape tape;
  Bound bound(tape, m.params);
  GaussianVars dist = decode(bound, m, tape.constant(Tensor({2})));
  REQUIRE(big.v[0] == Catch::Approx(tape.val(dist.mean).v[0]).margin(1e-6));
}

TEST_CASE("iw-family imputation weights samples by their log-weights") {
  Rng rng(9);
  Model m = Model::create(ModelKind::Miwae, 3, tiny(), rng);
  Tensor x = Tensor::vector({0.4, 0.0, 0.7});
  Tensor mask = Tensor::vector({1, 0, 1});
  Rng a(10), b(10);
  Tensor one = impute(m, x, mask, 64, a);
  Tensor two = impute(m, x, mask, 64, b);
  REQUIRE(one.v == two.v);  // deterministic given the stream
  REQUIRE(one.v[1] > 0.0);
  REQUIRE(one.v[1] < 1.0);
}

TEST_CASE("rmse_missing formula") {
  MaskPattern q(2, 2);
  q.set(0, 0, true);
  q.set(0, 1, false);
  q.set(1, 0, true);
  q.set(1, 1, true);
  Tensor truth = Tensor::matrix(2, 2, {1, 1, 1, 1});
  Tensor imputed = Tensor::matrix(2, 2, {1, 1.5, 1, 1});
  // one row with error 0.5 at its single missing cell, one clean row
  REQUIRE(rmse_missing(imputed, truth, q) ==
          Catch::Approx(std::sqrt(0.25 / 2.0)).margin(1e-12));

  // perfect imputation
  REQUIRE(rmse_missing(truth, truth, q) == 0.0);

  // two rows, one missing cell each, errors 0.3 and 0.4
  MaskPattern q2(2, 1);
  Tensor t2 = Tensor::matrix(2, 1, {0.0, 0.0});
  Tensor i2 = Tensor::matrix(2, 1, {0.3, 0.4});
  REQUIRE(rmse_missing(i2, t2, q2) ==
          Catch::Approx(std::sqrt((0.09 + 0.16) / 2.0)).margin(1e-9));
  REQUIRE(rmse_missing(i2, t2, q2) == Catch::Approx(0.35355).margin(1e-4));
}

TEST_CASE("rmse_missing is row-permutation invariant") {
  Rng rng(11);
  Tensor truth({6, 3}), imp({6, 3});
  for (double& e : truth.v) e = rng.uniform(0.0, 1.0);
  for (double& e : imp.v) e = rng.uniform(0.0, 1.0);
  MaskPattern q = sample_mcar_mask(6, 3, 0.4, rng);
  double base = rmse_missing(imp, truth, q);

  std::vector<std::size_t> perm{5, 3, 0, 1, 4, 2};
  REQUIRE(rmse_missing(
              take_rows(Dataset{imp, {}, {}, {}}, perm).values,
              take_rows(Dataset{truth, {}, {}, {}}, perm).values,
              take_rows(q, perm)) == Catch::Approx(base).margin(1e-12));
}

TEST_CASE("neg_expected_llh closed form for a z-ignoring decoder") {
  Rng rng(12);
  Model m = Model::create(ModelKind::Zi, 2, tiny(), rng);
  zero_prefix(m, "dec");
  // decoder now outputs mean 0.5, log-var 0 for every feature
  Tensor x = Tensor::vector({0.4, 0.0});
  Tensor mask = Tensor::vector({1, 0});
  Tensor truth = Tensor::vector({0.4, 0.5});  // hidden cell at the mean
  Rng erng(13);
  double nll = neg_expected_llh(m, x, mask, truth, 32, erng);
  REQUIRE(nll == Catch::Approx(0.5 * kLogTwoPi).margin(1e-10));

  // no hidden cells: exactly zero
  Rng erng2(14);
  REQUIRE(neg_expected_llh(m, x, Tensor::full({2}, 1.0), truth, 8, erng2) ==
          0.0);
}

TEST_CASE("test_elbo estimates agree across sample counts") {
  Rng rng(15);
  Model m = Model::create(ModelKind::Zi, 3, tiny(), rng);
  Dataset ds;
  ds.values = Tensor({20, 3});
  for (double& e : ds.values.v) e = rng.uniform(0.0, 1.0);
  MaskPattern q = sample_mcar_mask(20, 3, 0.3, rng);

  double small = test_elbo(m, ds, q, 100, 77);
  double large = test_elbo(m, ds, q, 1000, 78);
  // Gaussian family: the stochastic part is the reconstruction term only;
  // at these sample counts the estimates must nearly coincide
  REQUIRE(small == Catch::Approx(large).margin(0.05));

  // deterministic given the seed
  REQUIRE(test_elbo(m, ds, q, 10, 99) == test_elbo(m, ds, q, 10, 99));
}

TEST_CASE("metrics CSV rows carry the stable column order") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "pcvae_metrics_test";
  fs::create_directories(dir);
  fs::path file = dir / "results.csv";
  fs::remove(file);

  MetricsRecord rec;
  rec.dataset = "toy";
  rec.model = "pnp";
  rec.reg = true;
  rec.lambda = 0.5;
  rec.p_remove = 0.3;
  rec.missing_rate = 0.3;
  rec.seed = 7;
  rec.rmse = 0.125;
  rec.elbo = -1.5;  // neg_llh intentionally skipped
  append_metrics_csv(file.string(), rec, {"hash=abc"});
  append_metrics_csv(file.string(), rec);

  std::ifstream in(file);
  std::string line;
  std::getline(in, line);
  REQUIRE(line == "# hash=abc");
  std::getline(in, line);
  REQUIRE(line ==
          "dataset,model,reg,lambda,p_remove,missing_rate,seed,rmse,"
          "neg_llh,elbo");
  std::getline(in, line);
  REQUIRE(line == "toy,pnp,1,0.5,0.3,0.3,7,0.125,,-1.5");
  std::getline(in, line);
  REQUIRE(line == "toy,pnp,1,0.5,0.3,0.3,7,0.125,,-1.5");
  fs::remove_all(dir);
}
