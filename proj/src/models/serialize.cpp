#include "anomap/models/serialize.hpp"

namespace anomap::models {

using nlohmann::json;
using nn::LayerSpec;

json spec_to_json(const LayerSpec& s) {
  json j = {{"kind", nn::to_string(s.kind)}};
  switch (s.kind) {
    case nn::LayerKind::kConv:
    case nn::LayerKind::kConvTransposed: {
      const auto [ph, pw] = s.resolved_padding();
      j["kernel"] = {s.kernel_h, s.kernel_w};
      j["stride"] = {s.stride_h, s.stride_w};
      j["padding"] = nn::to_string(s.padding);
      j["pad"] = {ph, pw};
      j["in_channels"] = s.in_channels;
      j["out_channels"] = s.out_channels;
      j["bias"] = s.bias;
      if (s.kind == nn::LayerKind::kConvTransposed) {
        j["output_padding"] = {s.output_padding_h, s.output_padding_w};
      }
      break;
    }
    case nn::LayerKind::kMaxPool:
    case nn::LayerKind::kUpsample: j["factor"] = s.factor; break;
    case nn::LayerKind::kBatchNorm: j["channels"] = s.in_channels; break;
    default: break;
  }
  return j;
}

LayerSpec spec_from_json(const json& j) {
  LayerSpec s;
  try {
    s.kind = nn::parse_layer_kind(j.at("kind").get<std::string>());
    switch (s.kind) {
      case nn::LayerKind::kConv:
      case nn::LayerKind::kConvTransposed: {
        const auto k = j.at("kernel").get<std::vector<int>>();
        const auto st = j.at("stride").get<std::vector<int>>();
        const auto pad = j.at("pad").get<std::vector<int>>();
        s.kernel_h = k.at(0);
        s.kernel_w = k.at(1);
        s.stride_h = st.at(0);
        s.stride_w = st.at(1);
        s.padding = nn::parse_padding(j.at("padding").get<std::string>());
        s.pad_h = pad.at(0);
        s.pad_w = pad.at(1);
        s.in_channels = j.at("in_channels").get<int>();
        s.out_channels = j.at("out_channels").get<int>();
        s.bias = j.at("bias").get<bool>();
        if (s.kind == nn::LayerKind::kConvTransposed) {
          const auto op = j.at("output_padding").get<std::vector<int>>();
          s.output_padding_h = op.at(0);
          s.output_padding_w = op.at(1);
        }
        break;
      }
      case nn::LayerKind::kMaxPool:
      case nn::LayerKind::kUpsample: s.factor = j.at("factor").get<int>(); break;
      case nn::LayerKind::kBatchNorm:
        s.in_channels = s.out_channels = j.at("channels").get<int>();
        break;
      default: break;
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, std::string("bad layer description: ") + e.what());
  }
  return s;
}

namespace {

json describe(const Sequential<float>& net) {
  json layers = json::array();
  for (const auto& s : net.specs()) layers.push_back(spec_to_json(s));
  return layers;
}

nn::NamedTensor named(const std::string& name, const Tensor<float>& t) {
  const Shape& s = t.shape();
  return {name, {s.n, s.c, s.h, s.w}, std::vector<float>(t.values().begin(), t.values().end())};
}

void append_state(nn::Checkpoint& ckpt, Sequential<float>& net) {
  for (auto* p : net.params()) ckpt.tensors.push_back(named(p->name, p->value));
  const auto buffers = net.buffers();
  for (std::size_t i = 0; i < buffers.size(); ++i) {
    ckpt.tensors.push_back(named(net.name() + ".buffer." + std::to_string(i), *buffers[i]));
  }
}

void append_optimizer(nn::Checkpoint& ckpt, const std::vector<nn::Param<float>*>& params,
                      const nn::AdamState<float>* opt) {
  if (opt == nullptr) return;
  const auto& c = opt->config;
  ckpt.header["optimizer"] = {{"kind", "adam"},
                              {"step", opt->step},
                              {"learning_rate", c.learning_rate},
                              {"beta1", c.beta1},
                              {"beta2", c.beta2},
                              {"epsilon", c.epsilon}};
  for (std::size_t i = 0; i < opt->first_moment.size(); ++i) {
    const Shape& s = params[i]->value.shape();
    ckpt.tensors.push_back({"adam.m." + params[i]->name, {s.n, s.c, s.h, s.w},
                            opt->first_moment[i]});
    ckpt.tensors.push_back({"adam.v." + params[i]->name, {s.n, s.c, s.h, s.w},
                            opt->second_moment[i]});
  }
}

void load_tensor(const nn::Checkpoint& ckpt, const std::string& name, Tensor<float>& dst) {
  const auto& t = ckpt.tensor(name);
  require(t.values.size() == dst.size(), ErrorKind::kFormat,
          "checkpoint tensor '" + name + "' has " + std::to_string(t.values.size()) +
              " values, model expects " + std::to_string(dst.size()));
  std::copy(t.values.begin(), t.values.end(), dst.values().begin());
}

void restore_state(const nn::Checkpoint& ckpt, Sequential<float>& net) {
  for (auto* p : net.params()) load_tensor(ckpt, p->name, p->value);
  const auto buffers = net.buffers();
  for (std::size_t i = 0; i < buffers.size(); ++i) {
    load_tensor(ckpt, net.name() + ".buffer." + std::to_string(i), *buffers[i]);
  }
}

void verify_layers(const json& stored, const Sequential<float>& net, const char* part) {
  require(stored == describe(net), ErrorKind::kFormat,
          std::string("checkpoint ") + part + " architecture does not match the model");
}

}  // namespace

nn::Checkpoint to_checkpoint(AEModel<float>& model, const nn::AdamState<float>* optimizer,
                             const json& meta) {
  nn::Checkpoint ckpt;
  ckpt.header["model"] = "ae";
  ckpt.header["input"] = {model.channels(), model.height(), model.width()};
  ckpt.header["encoder"] = describe(model.encoder());
  ckpt.header["decoder"] = describe(model.decoder());
  ckpt.header["meta"] = meta;
  append_state(ckpt, model.encoder());
  append_state(ckpt, model.decoder());
  append_optimizer(ckpt, model.params(), optimizer);
  return ckpt;
}

nn::Checkpoint to_checkpoint(SAEModel<float>& model, const nn::AdamState<float>* optimizer,
                             const json& meta) {
  nn::Checkpoint ckpt;
  ckpt.header["model"] = "sae";
  ckpt.header["input"] = {model.channels(), model.patch(), model.patch()};
  ckpt.header["encoder"] = describe(model.branch(0).encoder);
  ckpt.header["decoder"] = describe(model.branch(0).decoder);
  ckpt.header["meta"] = meta;
  append_state(ckpt, model.branch(0).encoder);
  append_state(ckpt, model.branch(0).decoder);
  append_optimizer(ckpt, model.params(), optimizer);
  return ckpt;
}

AEModel<float> ae_from_checkpoint(const nn::Checkpoint& ckpt) {
  require(ckpt.header.value("model", "") == "ae", ErrorKind::kFormat,
          "checkpoint does not hold an AE model");
  const auto input = ckpt.header.at("input").get<std::vector<int>>();
  require(input.size() == 3, ErrorKind::kFormat, "checkpoint field 'input' must have 3 entries");
  AEModel<float> model(input[0], input[1], input[2]);
  verify_layers(ckpt.header.at("encoder"), model.encoder(), "encoder");
  verify_layers(ckpt.header.at("decoder"), model.decoder(), "decoder");
  restore_state(ckpt, model.encoder());
  restore_state(ckpt, model.decoder());
  return model;
}

SAEModel<float> sae_from_checkpoint(const nn::Checkpoint& ckpt) {
  require(ckpt.header.value("model", "") == "sae", ErrorKind::kFormat,
          "checkpoint does not hold an SAE model");
  const auto input = ckpt.header.at("input").get<std::vector<int>>();
  require(input.size() == 3 && input[1] == input[2], ErrorKind::kFormat,
          "checkpoint field 'input' must be (channels, patch, patch)");
  SAEModel<float> model(input[0], input[1]);
  verify_layers(ckpt.header.at("encoder"), model.branch(0).encoder, "encoder");
  verify_layers(ckpt.header.at("decoder"), model.branch(0).decoder, "decoder");
  restore_state(ckpt, model.branch(0).encoder);
  restore_state(ckpt, model.branch(0).decoder);
  return model;
}

nn::AdamState<float> optimizer_from_checkpoint(const nn::Checkpoint& ckpt) {
  nn::AdamState<float> state;
  if (!ckpt.header.contains("optimizer")) return state;
  const json& o = ckpt.header.at("optimizer");
  state.step = o.at("step").get<std::int64_t>();
  state.config = {o.at("learning_rate").get<double>(), o.at("beta1").get<double>(),
                  o.at("beta2").get<double>(), o.at("epsilon").get<double>()};
  for (const auto& t : ckpt.tensors) {
    if (t.name.rfind("adam.m.", 0) == 0) state.first_moment.push_back(t.values);
    if (t.name.rfind("adam.v.", 0) == 0) state.second_moment.push_back(t.values);
  }
  return state;
}

}  // namespace anomap::models
