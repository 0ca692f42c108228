#include "dkf/model_io.hpp"

#include <fstream>
#include <sstream>

#include "dkf/errors.hpp"
#include "json.hpp"

namespace dkf {

namespace {

using nlohmann::json;

json matrix_to_json(const Matrix& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Matrix matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw Error(ErrorKind::kSchemaMismatch, "matrix payload has the wrong size");
  }
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = data[static_cast<std::size_t>(r * cols + c)].get<double>();
    }
  }
  return m;
}

json vector_to_json(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Vector vector_from_json(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

json scaler_to_json(const InputScaler& s) {
  return {{"mean", vector_to_json(s.mean)}, {"scale", vector_to_json(s.scale)}};
}

InputScaler scaler_from_json(const json& j) {
  return {vector_from_json(j.at("mean")), vector_from_json(j.at("scale"))};
}

json mlp_to_json(const MlpRegressor& net) {
  const auto& w = net.weights();
  return {{"input_scaler", scaler_to_json(net.input_scaler())},
          {"output_scaler", scaler_to_json(net.output_scaler())},
          {"W1", matrix_to_json(w.W1)},
          {"b1", vector_to_json(w.b1)},
          {"W2", matrix_to_json(w.W2)},
          {"b2", vector_to_json(w.b2)}};
}

std::shared_ptr<const MlpRegressor> mlp_from_json(const json& j) {
  MlpWeights w{matrix_from_json(j.at("W1")), vector_from_json(j.at("b1")),
               matrix_from_json(j.at("W2")), vector_from_json(j.at("b2"))};
  return std::make_shared<const MlpRegressor>(scaler_from_json(j.at("input_scaler")),
                                              scaler_from_json(j.at("output_scaler")),
                                              std::move(w));
}

json gp_to_json(const GpRegressor& gp) {
  json hyper = json::array();
  for (const auto& h : gp.hyperparameters()) {
    hyper.push_back({{"length_scale", h.kernel.length_scale},
                     {"signal_variance", h.kernel.signal_variance},
                     {"noise_variance", h.noise_variance}});
  }
  return {{"scaler", scaler_to_json(gp.scaler())},
          {"scaled_inputs", matrix_to_json(gp.scaled_inputs())},
          {"targets", matrix_to_json(gp.targets())},
          {"hyperparameters", hyper}};
}

std::shared_ptr<const GpRegressor> gp_from_json(const json& j) {
  std::vector<GpHyperparameters> hyper;
  for (const auto& h : j.at("hyperparameters")) {
    hyper.push_back({{h.at("length_scale").get<double>(), h.at("signal_variance").get<double>()},
                     h.at("noise_variance").get<double>()});
  }
  return std::make_shared<const GpRegressor>(GpRegressor::from_scaled_inputs(
      scaler_from_json(j.at("scaler")), matrix_from_json(j.at("scaled_inputs")),
      matrix_from_json(j.at("targets")), std::move(hyper)));
}

DkfVariant variant_from_string(const std::string& name) {
  for (auto v : {DkfVariant::kGp, DkfVariant::kGpFreq, DkfVariant::kNn}) {
    if (to_string(v) == name) return v;
  }
  throw Error(ErrorKind::kSchemaMismatch, "unknown discriminative variant: " + name);
}

}  // namespace

FilterKind ModelBundle::filter_kind() const {
  if (filter == "kalman") return FilterKind::kKalman;
  if (filter == "ekf") return FilterKind::kEkf;
  if (filter == "ukf") return FilterKind::kUkf;
  if (filter == "dkf-gp" || filter == "dkf-gp-freq" || filter == "dkf-nn") return FilterKind::kDkf;
  throw Error(ErrorKind::kSchemaMismatch, "unknown filter kind: " + filter);
}

FilterModels ModelBundle::to_filter_models() const {
  FilterModels models{dynamics, std::nullopt, std::nullopt, {}, {}};
  if (generative) models.generative = generative->as_observation_model();
  if (discriminative) models.discriminative = discriminative->as_observation_model();
  return models;
}

std::string serialize_model(const ModelBundle& bundle) {
  json doc;
  doc["format"] = "dkf-model";
  doc["version"] = kModelFormatVersion;
  doc["kind"] = bundle.filter;
  doc["dynamics"] = {{"A", matrix_to_json(bundle.dynamics.A)},
                     {"Gamma", matrix_to_json(bundle.dynamics.Gamma)},
                     {"S", matrix_to_json(bundle.dynamics.S)}};
  if (bundle.generative) {
    const auto& g = *bundle.generative;
    json gen;
    gen["Lambda"] = matrix_to_json(g.Lambda);
    if (g.kind == GenerativeKind::kAffine) {
      gen["kind"] = "affine";
      gen["H"] = matrix_to_json(g.H);
      gen["offset"] = vector_to_json(g.offset);
    } else {
      gen["kind"] = "mlp";
      gen["mlp"] = mlp_to_json(*g.mlp);
    }
    doc["generative"] = gen;
  }
  if (bundle.discriminative) {
    const auto& d = *bundle.discriminative;
    json disc;
    disc["variant"] = std::string(to_string(d.variant));
    if (d.gp) disc["gp"] = gp_to_json(*d.gp);
    if (d.mlp) disc["mlp"] = mlp_to_json(*d.mlp);
    if (d.Q.kind == QKind::kDiagonalFromGp) {
      disc["q"] = {{"kind", "diagonal-from-gp"}};
    } else {
      disc["q"] = {{"kind", "constant-from-residuals"}, {"constant", matrix_to_json(d.Q.constant)}};
    }
    doc["discriminative"] = disc;
  }
  return doc.dump(1);
}

ModelBundle deserialize_model(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kSchemaMismatch, std::string("model file is not valid JSON: ") + e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != "dkf-model") {
      throw Error(ErrorKind::kSchemaMismatch, "not a dkf model file");
    }
    if (doc.at("version").get<int>() != kModelFormatVersion) {
      throw Error(ErrorKind::kSchemaMismatch, "unsupported model format version");
    }
    ModelBundle bundle;
    bundle.filter = doc.at("kind").get<std::string>();
    const auto& dyn = doc.at("dynamics");
    bundle.dynamics = {matrix_from_json(dyn.at("A")), matrix_from_json(dyn.at("Gamma")),
                       matrix_from_json(dyn.at("S"))};
    if (doc.contains("generative")) {
      const auto& gen = doc.at("generative");
      GenerativeFit g;
      g.Lambda = matrix_from_json(gen.at("Lambda"));
      if (gen.at("kind").get<std::string>() == "affine") {
        g.kind = GenerativeKind::kAffine;
        g.H = matrix_from_json(gen.at("H"));
        g.offset = vector_from_json(gen.at("offset"));
      } else {
        g.kind = GenerativeKind::kMlp;
        g.mlp = mlp_from_json(gen.at("mlp"));
      }
      bundle.generative = std::move(g);
    }
    if (doc.contains("discriminative")) {
      const auto& disc = doc.at("discriminative");
      DkfVariantModel d;
      d.variant = variant_from_string(disc.at("variant").get<std::string>());
      if (disc.contains("gp")) d.gp = gp_from_json(disc.at("gp"));
      if (disc.contains("mlp")) d.mlp = mlp_from_json(disc.at("mlp"));
      const auto& q = disc.at("q");
      if (q.at("kind").get<std::string>() == "diagonal-from-gp") {
        if (!d.gp) throw Error(ErrorKind::kSchemaMismatch, "diagonal Q needs a GP model");
        d.Q.kind = QKind::kDiagonalFromGp;
        d.Q.gp = d.gp;
      } else {
        d.Q.kind = QKind::kConstantFromResiduals;
        d.Q.constant = matrix_from_json(q.at("constant"));
      }
      if (!d.gp && !d.mlp) throw Error(ErrorKind::kSchemaMismatch, "model has no mean regressor");
      bundle.discriminative = std::move(d);
    }
    return bundle;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kSchemaMismatch, std::string("malformed model file: ") + e.what());
  }
}

void save_model(const ModelBundle& bundle, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIoError, "cannot open " + path.string() + " for writing");
  out << serialize_model(bundle) << '\n';
}

ModelBundle load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIoError, "cannot open " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return deserialize_model(text.str());
}

}  // namespace dkf
