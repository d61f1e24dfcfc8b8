#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "vistree/data.hpp"
#include "vistree/errors.hpp"
#include "vistree/predictive.hpp"
#include "vistree/serialize.hpp"

using namespace vistree;

namespace {

std::filesystem::path temp_path(const std::string& stem) {
  static int counter = 0;
  return std::filesystem::temp_directory_path() /
         (stem + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++) + ".json");
}

struct FileGuard {
  std::filesystem::path path;
  ~FileGuard() { std::filesystem::remove(path); }
};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

VstModel fitted_vst() {
  Dataset d = synth(SynthName::TailLine, 90, 0.1, 91);
  TrainConfig c;
  c.depth = 2;
  c.rank = 2;
  c.steps = 150;
  c.batch_size = 64;
  return fit_vst(d.features, d.target, c).model;
}

VsgbmModel fitted_vsgbm() {
  Dataset d = synth(SynthName::Linear, 70, 0.2, 92);
  VsgbmConfig c;
  c.num_trees = 2;
  c.tree.depth = 1;
  c.tree.rank = 1;
  c.tree.steps = 100;
  c.tree.batch_size = 64;
  return fit_vsgbm(d.features, d.target, c).model;
}

}  // namespace

TEST_CASE("vst models round trip bit-exact through json") {
  VstModel m = fitted_vst();
  std::string text = to_json(m);
  AnyModel back = model_from_json(text);
  REQUIRE(model_kind(back) == "vst");
  const VstModel& r = std::get<VstModel>(back);

  CHECK(r.spec.depth == m.spec.depth);
  CHECK(r.spec.beta == m.spec.beta);
  CHECK((r.posterior.mean - m.posterior.mean).cwiseAbs().maxCoeff() == 0.0);
  CHECK((r.posterior.diag_raw - m.posterior.diag_raw).cwiseAbs().maxCoeff() == 0.0);
  CHECK((r.posterior.factor - m.posterior.factor).cwiseAbs().maxCoeff() == 0.0);
  CHECK(r.prior.variance == m.prior.variance);
  CHECK((r.feature_stats.mean - m.feature_stats.mean).cwiseAbs().maxCoeff() == 0.0);
  CHECK(r.target_stats.std == m.target_stats.std);

  // Identical state, identical bytes.
  CHECK(to_json(r) == text);

  Dataset probe = synth(SynthName::TailLine, 20, 0.1, 93);
  Metrics a = regression_metrics(m, probe.features, probe.target, 16, 7);
  Metrics b = regression_metrics(r, probe.features, probe.target, 16, 7);
  CHECK(a.mean_loglik == b.mean_loglik);
  CHECK(a.rmse == b.rmse);
  CHECK(a.mean_epistemic_std == b.mean_epistemic_std);
}

TEST_CASE("vsgbm models round trip bit-exact through json") {
  VsgbmModel m = fitted_vsgbm();
  std::string text = to_json(m);
  AnyModel back = model_from_json(text);
  REQUIRE(model_kind(back) == "vsgbm");
  const VsgbmModel& r = std::get<VsgbmModel>(back);

  REQUIRE(r.trees.size() == m.trees.size());
  for (std::size_t t = 0; t < m.trees.size(); ++t) {
    CHECK((r.trees[t].posterior.mean - m.trees[t].posterior.mean).cwiseAbs().maxCoeff() ==
          0.0);
  }
  CHECK(r.noise_posterior.shape == m.noise_posterior.shape);
  CHECK(r.noise_posterior.scale == m.noise_posterior.scale);
  CHECK(r.a_sigma == m.a_sigma);
  CHECK(r.shrinkage == m.shrinkage);
  CHECK((r.final_residuals - m.final_residuals).cwiseAbs().maxCoeff() == 0.0);
  CHECK(to_json(r) == text);

  Dataset probe = synth(SynthName::Linear, 15, 0.2, 94);
  Metrics a = regression_metrics(m, probe.features, probe.target, 16, 7);
  Metrics b = regression_metrics(r, probe.features, probe.target, 16, 7);
  CHECK(a.mean_loglik == b.mean_loglik);
  CHECK(a.rmse == b.rmse);
}

TEST_CASE("save_model and load_model work through the filesystem") {
  VstModel m = fitted_vst();
  auto path = temp_path("model");
  FileGuard guard{path};
  save_model(path.string(), m);
  AnyModel back = load_model(path.string());
  CHECK(model_kind(back) == "vst");
  CHECK(read_file(path) == to_json(m));

  auto path2 = temp_path("model");
  FileGuard guard2{path2};
  save_model(path2.string(), m);
  CHECK(read_file(path) == read_file(path2));
}

TEST_CASE("malformed documents are rejected with DataError") {
  CHECK_THROWS_AS(model_from_json("not json at all"), DataError);
  CHECK_THROWS_AS(model_from_json("{}"), DataError);
  CHECK_THROWS_AS(model_from_json("{\"format_version\": 1, \"model_kind\": \"zebra\"}"),
                  DataError);

  VstModel m = fitted_vst();
  std::string text = to_json(m);
  std::string bumped = text;
  auto pos = bumped.find("\"format_version\": 1");
  REQUIRE(pos != std::string::npos);
  bumped.replace(pos, std::string("\"format_version\": 1").size(), "\"format_version\": 99");
  CHECK_THROWS_AS(model_from_json(bumped), DataError);

  CHECK_THROWS_AS(load_model("/nonexistent/path/model.json"), DataError);
}

TEST_CASE("identically trained models serialize to identical bytes") {
  VstModel a = fitted_vst();
  VstModel b = fitted_vst();
  CHECK(to_json(a) == to_json(b));
  VsgbmModel c = fitted_vsgbm();
  VsgbmModel d = fitted_vsgbm();
  CHECK(to_json(c) == to_json(d));
}
