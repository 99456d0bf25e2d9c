// Versioned model checkpoints (manifest.json + little-endian f32 weights.bin)
// and provenance stamping for reports.
#pragma once

#include "ampls/colpred.hpp"
#include "ampls/vae.hpp"

#include <nlohmann/json.hpp>

namespace ampls {

inline constexpr int kCheckpointSchemaVersion = 1;

// Directory layout: <dir>/manifest.json + <dir>/weights.bin. The manifest
// records the parameter layout (name, rows, cols) in blob order; tensors are
// serialised column-major. Loading verifies the schema version and the blob
// length against the manifest.
void save_vae(const std::string& dir, const VaeModel<float>& model,
              std::uint64_t seed = 0, const nlohmann::json& extra = {});
VaeModel<float> load_vae(const std::string& dir);

void save_colpred(const std::string& dir, const CollisionPredictor<float>& pred,
                  std::uint64_t seed = 0, const nlohmann::json& extra = {});
CollisionPredictor<float> load_colpred(const std::string& dir);

// Optional training/metadata sidecar stored by save_* when `extra` is given.
nlohmann::json load_checkpoint_extra(const std::string& dir);

// FNV-1a over the serialised parameter blob.
std::uint64_t model_hash(const Mlp<float>& m);
std::uint64_t vae_hash(const VaeModel<float>& m);
std::uint64_t colpred_hash(const CollisionPredictor<float>& m);

struct ProvenanceInputs {
  std::uint64_t seed = 0;
  std::string config_text;          // hashed, not embedded
  std::string vae_dir, colpred_dir; // hashed when non-empty
  std::string arm_json;             // hashed when non-empty
};

// Embeds seeds and content hashes into a report so every artifact in it can
// be regenerated.
nlohmann::json stamp_provenance(nlohmann::json report, const ProvenanceInputs& inputs);

}  // namespace ampls
