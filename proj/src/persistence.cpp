#include "ampls/persistence.hpp"

#include <filesystem>
#include <fstream>

namespace ampls {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TensorRef {
  std::string name;
  const MatX<float>* mat = nullptr;
  const VecX<float>* vec = nullptr;
  long rows() const { return mat ? mat->rows() : vec->size(); }
  long cols() const { return mat ? mat->cols() : 1; }
  const float* data() const { return mat ? mat->data() : vec->data(); }
};

std::vector<TensorRef> mlp_tensors(const Mlp<float>& m, const std::string& prefix) {
  std::vector<TensorRef> out;
  for (int l = 0; l < m.layer_count(); ++l) {
    out.push_back({prefix + ".w" + std::to_string(l), &m.weights[l], nullptr});
    out.push_back({prefix + ".b" + std::to_string(l), nullptr, &m.biases[l]});
  }
  return out;
}

json layout_json(const std::vector<TensorRef>& tensors) {
  json j = json::array();
  for (const auto& t : tensors)
    j.push_back({{"name", t.name}, {"rows", t.rows()}, {"cols", t.cols()}});
  return j;
}

void write_blob(const std::string& path, const std::vector<TensorRef>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("checkpoint: cannot open " + path);
  for (const auto& t : tensors) {
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.rows() * t.cols() * sizeof(float)));
  }
}

json mlp_manifest(const Mlp<float>& m) {
  return json{{"widths", m.widths},
              {"output", m.output == Mlp<float>::Output::Sigmoid ? "sigmoid" : "identity"}};
}

Mlp<float> mlp_from_manifest(const json& j) {
  Mlp<float> m;
  m.widths = j.at("widths").get<std::vector<int>>();
  m.output = j.at("output").get<std::string>() == "sigmoid" ? Mlp<float>::Output::Sigmoid
                                                            : Mlp<float>::Output::Identity;
  for (std::size_t l = 0; l + 1 < m.widths.size(); ++l) {
    m.weights.emplace_back(m.widths[l + 1], m.widths[l]);
    m.biases.emplace_back(m.widths[l + 1]);
  }
  return m;
}

void read_blob(const std::string& path, std::vector<std::pair<float*, long>> dests) {
  long expected = 0;
  for (const auto& [ptr, n] : dests) expected += n;
  std::error_code ec;
  const auto actual = fs::file_size(path, ec);
  if (ec) throw Error("checkpoint: cannot stat " + path);
  if (static_cast<long>(actual) != expected * static_cast<long>(sizeof(float)))
    throw CorruptBlob("checkpoint: weights.bin length does not match manifest layout");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("checkpoint: cannot open " + path);
  for (auto& [ptr, n] : dests) {
    in.read(reinterpret_cast<char*>(ptr), static_cast<std::streamsize>(n * sizeof(float)));
  }
  if (!in) throw CorruptBlob("checkpoint: short read from weights.bin");
}

std::vector<std::pair<float*, long>> mlp_dests(Mlp<float>& m) {
  std::vector<std::pair<float*, long>> out;
  for (int l = 0; l < m.layer_count(); ++l) {
    out.emplace_back(m.weights[l].data(), m.weights[l].size());
    out.emplace_back(m.biases[l].data(), m.biases[l].size());
  }
  return out;
}

json read_manifest(const std::string& dir, const std::string& kind) {
  std::ifstream in(dir + "/manifest.json");
  if (!in) throw Error("checkpoint: missing manifest in " + dir);
  json j = json::parse(in);
  if (j.at("schema_version").get<int>() != kCheckpointSchemaVersion)
    throw SchemaMismatch("checkpoint: unsupported schema_version");
  if (j.at("kind").get<std::string>() != kind)
    throw SchemaMismatch("checkpoint: expected kind " + kind);
  if (j.at("float_width").get<int>() != 32)
    throw SchemaMismatch("checkpoint: unsupported float width");
  return j;
}

void write_manifest_and_extra(const std::string& dir, const json& manifest,
                              const json& extra) {
  fs::create_directories(dir);
  std::ofstream out(dir + "/manifest.json");
  out << manifest.dump(2) << "\n";
  if (!extra.is_null() && !extra.empty()) {
    std::ofstream ex(dir + "/training_summary.json");
    ex << extra.dump(2) << "\n";
  }
}

std::uint64_t tensors_hash(const std::vector<TensorRef>& tensors) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& t : tensors)
    h = fnv1a(t.data(), static_cast<std::size_t>(t.rows() * t.cols() * sizeof(float)), h);
  return h;
}

}  // namespace

void save_vae(const std::string& dir, const VaeModel<float>& model, std::uint64_t seed,
              const json& extra) {
  auto tensors = mlp_tensors(model.encoder, "encoder");
  const auto dec = mlp_tensors(model.decoder, "decoder");
  tensors.insert(tensors.end(), dec.begin(), dec.end());

  json manifest;
  manifest["schema_version"] = kCheckpointSchemaVersion;
  manifest["kind"] = "vae";
  manifest["float_width"] = 32;
  manifest["storage_order"] = "col_major";
  manifest["created_seed"] = seed;
  manifest["latent_dim"] = model.latent_dim;
  manifest["state_dim"] = model.state_dim;
  manifest["encoder"] = mlp_manifest(model.encoder);
  manifest["decoder"] = mlp_manifest(model.decoder);
  manifest["normalizer"] = {
      {"offset", std::vector<double>(model.norm.offset.data(),
                                     model.norm.offset.data() + model.norm.offset.size())},
      {"scale", std::vector<double>(model.norm.scale.data(),
                                    model.norm.scale.data() + model.norm.scale.size())}};
  manifest["layout"] = layout_json(tensors);
  manifest["param_hash"] = tensors_hash(tensors);

  write_manifest_and_extra(dir, manifest, extra);
  write_blob(dir + "/weights.bin", tensors);
}

VaeModel<float> load_vae(const std::string& dir) {
  const json manifest = read_manifest(dir, "vae");
  VaeModel<float> m;
  m.latent_dim = manifest.at("latent_dim").get<int>();
  m.state_dim = manifest.at("state_dim").get<int>();
  m.encoder = mlp_from_manifest(manifest.at("encoder"));
  m.decoder = mlp_from_manifest(manifest.at("decoder"));
  const auto off = manifest.at("normalizer").at("offset").get<std::vector<double>>();
  const auto sc = manifest.at("normalizer").at("scale").get<std::vector<double>>();
  m.norm.offset = Eigen::Map<const Eigen::VectorXd>(off.data(), off.size());
  m.norm.scale = Eigen::Map<const Eigen::VectorXd>(sc.data(), sc.size());

  auto dests = mlp_dests(m.encoder);
  const auto dec = mlp_dests(m.decoder);
  dests.insert(dests.end(), dec.begin(), dec.end());
  read_blob(dir + "/weights.bin", dests);
  return m;
}

void save_colpred(const std::string& dir, const CollisionPredictor<float>& pred,
                  std::uint64_t seed, const json& extra) {
  const auto tensors = mlp_tensors(pred.classifier, "classifier");
  json manifest;
  manifest["schema_version"] = kCheckpointSchemaVersion;
  manifest["kind"] = "colpred";
  manifest["float_width"] = 32;
  manifest["storage_order"] = "col_major";
  manifest["created_seed"] = seed;
  manifest["link_count"] = pred.link_count;
  manifest["voxel_feature_dim"] = kVoxelFeatureDim;
  manifest["grid"] = {{"min", {pred.grid_spec.bounds.min.x(), pred.grid_spec.bounds.min.y(),
                               pred.grid_spec.bounds.min.z()}},
                      {"max", {pred.grid_spec.bounds.max.x(), pred.grid_spec.bounds.max.y(),
                               pred.grid_spec.bounds.max.z()}},
                      {"resolution", pred.grid_spec.resolution}};
  manifest["classifier"] = mlp_manifest(pred.classifier);
  manifest["layout"] = layout_json(tensors);
  manifest["param_hash"] = tensors_hash(tensors);

  write_manifest_and_extra(dir, manifest, extra);
  write_blob(dir + "/weights.bin", tensors);
}

CollisionPredictor<float> load_colpred(const std::string& dir) {
  const json manifest = read_manifest(dir, "colpred");
  CollisionPredictor<float> p;
  p.link_count = manifest.at("link_count").get<int>();
  if (manifest.at("voxel_feature_dim").get<int>() != kVoxelFeatureDim)
    throw SchemaMismatch("checkpoint: voxel feature dimension mismatch");
  Aabb bounds;
  for (int i = 0; i < 3; ++i) {
    bounds.min[i] = manifest.at("grid").at("min").at(i).get<double>();
    bounds.max[i] = manifest.at("grid").at("max").at(i).get<double>();
  }
  p.grid_spec = GridSpec::make(bounds, manifest.at("grid").at("resolution").get<double>());
  p.classifier = mlp_from_manifest(manifest.at("classifier"));
  read_blob(dir + "/weights.bin", mlp_dests(p.classifier));
  return p;
}

json load_checkpoint_extra(const std::string& dir) {
  std::ifstream in(dir + "/training_summary.json");
  if (!in) return json::object();
  return json::parse(in);
}

std::uint64_t model_hash(const Mlp<float>& m) {
  return tensors_hash(mlp_tensors(m, "mlp"));
}

std::uint64_t vae_hash(const VaeModel<float>& m) {
  auto tensors = mlp_tensors(m.encoder, "encoder");
  const auto dec = mlp_tensors(m.decoder, "decoder");
  tensors.insert(tensors.end(), dec.begin(), dec.end());
  return tensors_hash(tensors);
}

std::uint64_t colpred_hash(const CollisionPredictor<float>& m) {
  return tensors_hash(mlp_tensors(m.classifier, "classifier"));
}

json stamp_provenance(json report, const ProvenanceInputs& inputs) {
  json prov;
  prov["seed"] = inputs.seed;
  prov["config_hash"] = fnv1a(inputs.config_text);
  if (!inputs.vae_dir.empty()) prov["vae_hash"] = vae_hash(load_vae(inputs.vae_dir));
  if (!inputs.colpred_dir.empty())
    prov["colpred_hash"] = colpred_hash(load_colpred(inputs.colpred_dir));
  if (!inputs.arm_json.empty()) prov["arm_hash"] = fnv1a(inputs.arm_json);
  report["provenance"] = prov;
  return report;
}

}  // namespace ampls
