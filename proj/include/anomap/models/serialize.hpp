#pragma once

#include <nlohmann/json.hpp>

#include "anomap/models/autoencoder.hpp"
#include "anomap/models/siamese.hpp"
#include "anomap/nn/adam.hpp"
#include "anomap/nn/checkpoint.hpp"

namespace anomap::models {

nlohmann::json spec_to_json(const nn::LayerSpec& spec);
nn::LayerSpec spec_from_json(const nlohmann::json& j);

/// Architecture + parameters (+ running statistics, + optimizer moments when
/// given). `meta` is stored under the header key "meta".
nn::Checkpoint to_checkpoint(AEModel<float>& model, const nn::AdamState<float>* optimizer,
                             const nlohmann::json& meta = nlohmann::json::object());
nn::Checkpoint to_checkpoint(SAEModel<float>& model, const nn::AdamState<float>* optimizer,
                             const nlohmann::json& meta = nlohmann::json::object());

/// Rebuilds the model and verifies the stored architecture matches it.
AEModel<float> ae_from_checkpoint(const nn::Checkpoint& ckpt);
SAEModel<float> sae_from_checkpoint(const nn::Checkpoint& ckpt);

/// Restores optimizer moments saved alongside the parameters (empty state if none).
nn::AdamState<float> optimizer_from_checkpoint(const nn::Checkpoint& ckpt);

}  // namespace anomap::models
