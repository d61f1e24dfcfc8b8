#include "vistree/serialize.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "vistree/errors.hpp"

namespace vistree {

namespace {

using nlohmann::json;

json vector_to_json(const Eigen::Ref<const Eigen::VectorXd>& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    out.push_back(v[i]);
  }
  return out;
}

Eigen::VectorXd vector_from_json(const json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    v[i] = j.at(static_cast<size_t>(i)).get<double>();
  }
  return v;
}

json spec_to_json(const SoftTreeSpec& spec) {
  json out;
  out["depth"] = spec.depth;
  out["feature_dim"] = spec.feature_dim;
  out["leaf_kind"] = spec.leaf_kind == LeafKind::Constant ? "constant" : "linear";
  out["beta"] = spec.beta;
  out["output_mode"] = spec.output_mode == OutputMode::Density ? "density" : "mean_only";
  return out;
}

SoftTreeSpec spec_from_json(const json& j) {
  SoftTreeSpec spec;
  spec.depth = j.at("depth").get<int>();
  spec.feature_dim = j.at("feature_dim").get<Eigen::Index>();
  const std::string leaf = j.at("leaf_kind").get<std::string>();
  if (leaf == "constant") {
    spec.leaf_kind = LeafKind::Constant;
  } else if (leaf == "linear") {
    spec.leaf_kind = LeafKind::Linear;
  } else {
    throw DataError("unknown leaf_kind '" + leaf + "'");
  }
  spec.beta = j.at("beta").get<double>();
  const std::string mode = j.at("output_mode").get<std::string>();
  if (mode == "density") {
    spec.output_mode = OutputMode::Density;
  } else if (mode == "mean_only") {
    spec.output_mode = OutputMode::MeanOnly;
  } else {
    throw DataError("unknown output_mode '" + mode + "'");
  }
  return spec;
}

json posterior_to_json(const LowRankGaussian& q) {
  json out;
  out["dim"] = q.dim();
  out["rank"] = q.rank();
  out["mean"] = vector_to_json(q.mean);
  out["diag_raw"] = vector_to_json(q.diag_raw);
  out["factor"] = vector_to_json(
      Eigen::Map<const Eigen::VectorXd>(q.factor.data(), q.factor.size()));
  return out;
}

LowRankGaussian posterior_from_json(const json& j) {
  LowRankGaussian q;
  const Eigen::Index dim = j.at("dim").get<Eigen::Index>();
  const Eigen::Index rank = j.at("rank").get<Eigen::Index>();
  q.mean = vector_from_json(j.at("mean"));
  q.diag_raw = vector_from_json(j.at("diag_raw"));
  const Eigen::VectorXd factor_flat = vector_from_json(j.at("factor"));
  if (q.mean.size() != dim || q.diag_raw.size() != dim || factor_flat.size() != dim * rank) {
    throw DataError("posterior arrays do not match the declared dimensions");
  }
  q.factor = Eigen::Map<const Eigen::MatrixXd>(factor_flat.data(), dim, rank);
  return q;
}

json scaler_to_json(const ScalerStats& stats) {
  json out;
  out["mean"] = vector_to_json(stats.mean);
  out["std"] = vector_to_json(stats.std);
  json constant = json::array();
  for (unsigned char c : stats.constant) {
    constant.push_back(static_cast<int>(c));
  }
  out["constant"] = constant;
  return out;
}

ScalerStats scaler_from_json(const json& j) {
  ScalerStats stats;
  stats.mean = vector_from_json(j.at("mean"));
  stats.std = vector_from_json(j.at("std"));
  for (const auto& c : j.at("constant")) {
    stats.constant.push_back(static_cast<unsigned char>(c.get<int>()));
  }
  if (stats.mean.size() != stats.std.size() ||
      stats.constant.size() != static_cast<size_t>(stats.mean.size())) {
    throw DataError("scaler arrays have mismatched lengths");
  }
  return stats;
}

json scalar_to_json(const ScalarStats& stats) {
  json out;
  out["mean"] = stats.mean;
  out["std"] = stats.std;
  out["constant"] = stats.constant ? 1 : 0;
  return out;
}

ScalarStats scalar_from_json(const json& j) {
  ScalarStats stats;
  stats.mean = j.at("mean").get<double>();
  stats.std = j.at("std").get<double>();
  stats.constant = j.at("constant").get<int>() != 0;
  return stats;
}

json tree_payload(const VstModel& model) {
  json out;
  out["spec"] = spec_to_json(model.spec);
  out["posterior"] = posterior_to_json(model.posterior);
  out["prior_variance"] = model.prior.variance;
  return out;
}

VstModel tree_from_payload(const json& j, const ScalerStats& feature_stats,
                           const ScalarStats& target_stats) {
  VstModel model;
  model.spec = spec_from_json(j.at("spec"));
  model.posterior = posterior_from_json(j.at("posterior"));
  model.prior.variance = j.at("prior_variance").get<double>();
  if (model.posterior.dim() != param_count(model.spec)) {
    throw DataError("posterior size does not match the tree parameter count");
  }
  model.feature_stats = feature_stats;
  model.target_stats = target_stats;
  return model;
}

json document_header(const char* kind) {
  json out;
  out["format_version"] = kModelFormatVersion;
  out["model_kind"] = kind;
  return out;
}

json parse_document(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed model file: ") + e.what());
  }
  if (!doc.contains("format_version") || !doc.at("format_version").is_number_integer()) {
    throw DataError("model file lacks an integer format_version");
  }
  const int version = doc.at("format_version").get<int>();
  if (version != kModelFormatVersion) {
    throw DataError("unsupported format_version " + std::to_string(version));
  }
  return doc;
}

}  // namespace

std::string to_json(const VstModel& model) {
  json doc = document_header("vst");
  doc["tree"] = tree_payload(model);
  doc["feature_stats"] = scaler_to_json(model.feature_stats);
  doc["target_stats"] = scalar_to_json(model.target_stats);
  return doc.dump(2) + "\n";
}

std::string to_json(const VsgbmModel& model) {
  json doc = document_header("vsgbm");
  json trees = json::array();
  for (const VstModel& tree : model.trees) {
    trees.push_back(tree_payload(tree));
  }
  doc["trees"] = trees;
  doc["noise_posterior"] = {{"shape", model.noise_posterior.shape},
                            {"scale", model.noise_posterior.scale}};
  doc["noise_prior"] = {{"a_sigma", model.a_sigma}, {"b_sigma", model.b_sigma}};
  doc["shrinkage"] = model.shrinkage;
  doc["feature_stats"] = scaler_to_json(model.feature_stats);
  doc["target_stats"] = scalar_to_json(model.target_stats);
  doc["final_residuals"] = vector_to_json(model.final_residuals);
  return doc.dump(2) + "\n";
}

AnyModel model_from_json(const std::string& text) {
  const json doc = parse_document(text);
  try {
    const std::string kind = doc.at("model_kind").get<std::string>();
    if (kind == "vst") {
      VstModel model = tree_from_payload(doc.at("tree"),
                                         scaler_from_json(doc.at("feature_stats")),
                                         scalar_from_json(doc.at("target_stats")));
      return model;
    }
    if (kind == "vsgbm") {
      VsgbmModel model;
      model.feature_stats = scaler_from_json(doc.at("feature_stats"));
      model.target_stats = scalar_from_json(doc.at("target_stats"));
      for (const json& payload : doc.at("trees")) {
        model.trees.push_back(tree_from_payload(payload, model.feature_stats, ScalarStats{}));
      }
      if (model.trees.empty()) {
        throw DataError("vsgbm model file has no trees");
      }
      model.noise_posterior.shape = doc.at("noise_posterior").at("shape").get<double>();
      model.noise_posterior.scale = doc.at("noise_posterior").at("scale").get<double>();
      model.a_sigma = doc.at("noise_prior").at("a_sigma").get<double>();
      model.b_sigma = doc.at("noise_prior").at("b_sigma").get<double>();
      model.shrinkage = doc.at("shrinkage").get<double>();
      model.final_residuals = vector_from_json(doc.at("final_residuals"));
      return model;
    }
    throw DataError("unknown model_kind '" + kind + "'");
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed model file: ") + e.what());
  }
}

namespace {

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError("cannot open '" + path + "' for writing");
  }
  out << text;
  if (!out) {
    throw DataError("write failed for '" + path + "'");
  }
}

}  // namespace

void save_model(const std::string& path, const VstModel& model) {
  write_file(path, to_json(model));
}

void save_model(const std::string& path, const VsgbmModel& model) {
  write_file(path, to_json(model));
}

AnyModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open model file '" + path + "'");
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return model_from_json(buffer.str());
}

std::string model_kind(const AnyModel& model) {
  return std::holds_alternative<VstModel>(model) ? "vst" : "vsgbm";
}

}  // namespace vistree
