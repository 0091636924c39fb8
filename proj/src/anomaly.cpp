#include "anomap/anomaly.hpp"

#include <algorithm>
#include <cmath>

#include "anomap/models/training.hpp"
#include "anomap/sampling.hpp"

namespace anomap {

using nn::Shape;
using nn::Tensor;

std::string to_string(ModelKind kind) { return kind == ModelKind::kAE ? "ae" : "sae"; }

ModelKind parse_model_kind(const std::string& s) {
  if (s == "ae") return ModelKind::kAE;
  if (s == "sae") return ModelKind::kSAE;
  fail(ErrorKind::kInvalidArgument, "unknown model kind '" + s + "' (expected ae or sae)");
}

std::string to_string(PatchAggregate mode) {
  return mode == PatchAggregate::kCenter ? "center" : "overlap-mean";
}

PatchAggregate parse_patch_aggregate(const std::string& s) {
  if (s == "center") return PatchAggregate::kCenter;
  if (s == "overlap-mean") return PatchAggregate::kOverlapMean;
  fail(ErrorKind::kInvalidArgument,
       "unknown patch aggregation '" + s + "' (expected center or overlap-mean)");
}

float joint_error(std::span<const float> x, std::span<const float> xhat) {
  require(x.size() == xhat.size(), ErrorKind::kShape,
          "joint_error: channel count mismatch (" + std::to_string(x.size()) + " vs " +
              std::to_string(xhat.size()) + ")");
  double s = 0.0;
  for (std::size_t c = 0; c < x.size(); ++c) {
    const double d = static_cast<double>(x[c]) - xhat[c];
    s += d * d;
  }
  return static_cast<float>(std::sqrt(s));
}

namespace {

// Joint error at pixel (y, x) of item n, channels strided by the plane size.
float pixel_error(const Tensor<float>& in, const Tensor<float>& out, int n, int y, int x) {
  double s = 0.0;
  for (int c = 0; c < in.shape().c; ++c) {
    const double d = static_cast<double>(in.at(n, c, y, x)) - out.at(n, c, y, x);
    s += d * d;
  }
  return static_cast<float>(std::sqrt(s));
}

ErrorMap empty_map(const Volume& volume, const BrainMask& mask) {
  require(volume.dims() == mask.dims(), ErrorKind::kShape,
          "mask dims do not match volume '" + volume.subject_id() + "'");
  ErrorMap m;
  m.subject_id = volume.subject_id();
  m.dims = volume.dims();
  m.joint_error.assign(m.dims.voxels(), 0.0f);
  m.coverage = BrainMask(m.dims);
  return m;
}

Tensor<float> run_checked(const BatchReconstructor& reconstruct, const Tensor<float>& x) {
  Tensor<float> y = reconstruct(x);
  require(y.shape() == x.shape(), ErrorKind::kShape,
          "reconstruction shape " + y.shape().str() + " differs from input " + x.shape().str());
  return y;
}

}  // namespace

ErrorMap error_volume_slices(const Volume& volume, const BrainMask& mask, int band,
                             const BatchReconstructor& reconstruct, int batch) {
  require(batch > 0, ErrorKind::kInvalidArgument, "batch must be > 0");
  ErrorMap m = empty_map(volume, mask);
  const auto slices = extract_axial_slices(volume, band);
  for (std::size_t start = 0; start < slices.size(); start += batch) {
    const std::size_t count = std::min<std::size_t>(batch, slices.size() - start);
    const Tensor<float> x =
        models::slices_to_tensor(std::span(slices).subspan(start, count));
    const Tensor<float> y = run_checked(reconstruct, x);
    for (std::size_t i = 0; i < count; ++i) {
      const int z = slices[start + i].slice_index;
      for (int yy = 0; yy < m.dims.height; ++yy) {
        for (int xx = 0; xx < m.dims.width; ++xx) {
          if (!mask.at(z, yy, xx)) continue;
          const std::size_t k = m.coverage.index(z, yy, xx);
          m.joint_error[k] = pixel_error(x, y, static_cast<int>(i), yy, xx);
          m.coverage.values()[k] = 1;
        }
      }
    }
  }
  return m;
}

ErrorMap error_volume_ae(models::AEModel<float>& model, const Volume& volume,
                         const BrainMask& mask, int band, const std::string& model_id) {
  const Dims& d = volume.dims();
  require(model.channels() == volume.channels() && model.height() == d.height &&
              model.width() == d.width,
          ErrorKind::kShape,
          "volume '" + volume.subject_id() + "' (" + std::to_string(volume.channels()) + "x" +
              std::to_string(d.height) + "x" + std::to_string(d.width) +
              " per slice) is incompatible with the AE checkpoint (" +
              std::to_string(model.channels()) + "x" + std::to_string(model.height()) + "x" +
              std::to_string(model.width()) + ")");
  ErrorMap m = error_volume_slices(
      volume, mask, band,
      [&model](const Tensor<float>& x) { return model.forward(x, nn::Mode::kInfer); });
  m.model = ModelKind::kAE;
  m.model_id = model_id;
  return m;
}

ErrorMap error_volume_patches(const Volume& volume, const BrainMask& mask,
                              const PatchMapOptions& options,
                              const BatchReconstructor& reconstruct) {
  require(options.batch > 0 && options.stride > 0, ErrorKind::kInvalidArgument,
          "patch batch and stride must be > 0");
  ErrorMap m = empty_map(volume, mask);
  const int half = options.patch / 2;
  std::vector<Voxel> centres = eligible_patch_centers(mask, options.patch);
  if (options.mode == PatchAggregate::kOverlapMean) {
    std::erase_if(centres, [&](const Voxel& v) {
      return (v.y - half) % options.stride != 0 || (v.x - half) % options.stride != 0;
    });
  }
  require(!centres.empty(), ErrorKind::kInvalidArgument,
          "no eligible patch centre for subject '" + volume.subject_id() + "'");

  std::vector<double> sum;
  std::vector<std::uint32_t> hits;
  if (options.mode == PatchAggregate::kOverlapMean) {
    sum.assign(m.dims.voxels(), 0.0);
    hits.assign(m.dims.voxels(), 0);
  }
  std::vector<PatchSample> patches;
  for (std::size_t start = 0; start < centres.size(); start += options.batch) {
    const std::size_t count = std::min<std::size_t>(options.batch, centres.size() - start);
    patches.clear();
    for (std::size_t i = 0; i < count; ++i) {
      patches.push_back(extract_patch(volume, centres[start + i], options.patch));
    }
    const Tensor<float> x = models::patches_to_tensor(patches);
    const Tensor<float> y = run_checked(reconstruct, x);
    for (std::size_t i = 0; i < count; ++i) {
      const Voxel& c = centres[start + i];
      const int n = static_cast<int>(i);
      if (options.mode == PatchAggregate::kCenter) {
        const std::size_t k = m.coverage.index(c.z, c.y, c.x);
        m.joint_error[k] = pixel_error(x, y, n, half, half);
        m.coverage.values()[k] = 1;
        continue;
      }
      for (int py = 0; py < options.patch; ++py) {
        for (int px = 0; px < options.patch; ++px) {
          const std::size_t k = m.coverage.index(c.z, c.y - half + py, c.x - half + px);
          sum[k] += pixel_error(x, y, n, py, px);
          ++hits[k];
        }
      }
    }
  }
  if (options.mode == PatchAggregate::kOverlapMean) {
    for (std::size_t k = 0; k < sum.size(); ++k) {
      if (hits[k] == 0) continue;
      m.joint_error[k] = static_cast<float>(sum[k] / hits[k]);
      m.coverage.values()[k] = 1;
    }
  }
  return m;
}

ErrorMap error_volume_sae(models::SAEModel<float>& model, const Volume& volume,
                          const BrainMask& mask, const PatchMapOptions& options,
                          const std::string& model_id) {
  require(model.channels() == volume.channels(), ErrorKind::kShape,
          "volume '" + volume.subject_id() + "' has " + std::to_string(volume.channels()) +
              " channels, the SAE checkpoint expects " + std::to_string(model.channels()));
  require(model.patch() == options.patch, ErrorKind::kShape,
          "patch size " + std::to_string(options.patch) + " differs from the SAE checkpoint (" +
              std::to_string(model.patch()) + ")");
  ErrorMap m = error_volume_patches(
      volume, mask, options, [&model](const Tensor<float>& x) { return model.reconstruct(x); });
  m.model = ModelKind::kSAE;
  m.model_id = model_id;
  return m;
}

double quantile_linear(std::vector<float> values, double q) {
  require(!values.empty(), ErrorKind::kInvalidArgument, "quantile of an empty sample");
  require(q > 0.0 && q < 1.0, ErrorKind::kInvalidArgument, "quantile level must lie in (0, 1)");
  const double h = static_cast<double>(values.size() - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  auto nth = values.begin() + static_cast<std::ptrdiff_t>(lo);
  std::nth_element(values.begin(), nth, values.end());
  const double a = *nth;
  if (lo + 1 == values.size()) return a;
  const double b = *std::min_element(nth + 1, values.end());
  return a + (h - static_cast<double>(lo)) * (b - a);
}

AbnormalityThreshold abnormality_threshold(std::span<const ErrorMap> controls, double q,
                                           const std::string& population_id) {
  require(!controls.empty(), ErrorKind::kInvalidArgument, "no control error maps to pool");
  std::vector<float> pool;
  for (const auto& m : controls) {
    require(m.model_id == controls.front().model_id, ErrorKind::kInvalidArgument,
            "control maps come from different models");
    for (std::size_t k = 0; k < m.joint_error.size(); ++k) {
      if (m.coverage.values()[k]) pool.push_back(m.joint_error[k]);
    }
  }
  require(!pool.empty(), ErrorKind::kInvalidArgument, "control error maps cover no voxel");
  AbnormalityThreshold t;
  t.q = q;
  t.pool_size = pool.size();
  t.value = quantile_linear(std::move(pool), q);
  t.population_id = population_id;
  t.model_id = controls.front().model_id;
  return t;
}

BinaryAnomalyMap binarize(const ErrorMap& map, double threshold) {
  BinaryAnomalyMap b;
  b.subject_id = map.subject_id;
  b.coverage = map.coverage;
  b.abnormal = BrainMask(map.dims);
  b.threshold = threshold;
  for (std::size_t k = 0; k < map.joint_error.size(); ++k) {
    if (map.coverage.values()[k] && map.joint_error[k] > threshold) b.abnormal.values()[k] = 1;
  }
  return b;
}

Volume error_map_to_volume(const ErrorMap& map) {
  std::vector<float> data(map.dims.voxels());
  for (std::size_t k = 0; k < data.size(); ++k) {
    data[k] = map.coverage.values()[k] ? map.joint_error[k] : -1.0f;
  }
  return Volume(map.subject_id, map.dims, 1, {1.5, 1.5, 1.5}, {"joint_error"},
                std::move(data));
}

ErrorMap error_map_from_volume(const Volume& volume, ModelKind model, std::string model_id) {
  require(volume.channels() == 1, ErrorKind::kFormat,
          "error map '" + volume.subject_id() + "' must have one channel");
  ErrorMap m;
  m.subject_id = volume.subject_id();
  m.dims = volume.dims();
  m.coverage = BrainMask(m.dims);
  m.joint_error.assign(m.dims.voxels(), 0.0f);
  m.model = model;
  m.model_id = std::move(model_id);
  const auto v = volume.channel(0);
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (v[k] >= 0.0f) {
      m.joint_error[k] = v[k];
      m.coverage.values()[k] = 1;
    }
  }
  return m;
}

Volume binary_map_to_volume(const BinaryAnomalyMap& map) {
  std::vector<float> data(map.dims().voxels());
  for (std::size_t k = 0; k < data.size(); ++k) {
    data[k] = !map.coverage.values()[k] ? -1.0f : (map.abnormal.values()[k] ? 1.0f : 0.0f);
  }
  return Volume(map.subject_id, map.dims(), 1, {1.5, 1.5, 1.5}, {"abnormal"}, std::move(data));
}

BinaryAnomalyMap binary_map_from_volume(const Volume& volume, double threshold) {
  require(volume.channels() == 1, ErrorKind::kFormat,
          "binary map '" + volume.subject_id() + "' must have one channel");
  BinaryAnomalyMap b;
  b.subject_id = volume.subject_id();
  b.coverage = BrainMask(volume.dims());
  b.abnormal = BrainMask(volume.dims());
  b.threshold = threshold;
  const auto v = volume.channel(0);
  for (std::size_t k = 0; k < v.size(); ++k) {
    b.coverage.values()[k] = v[k] >= 0.0f ? 1 : 0;
    b.abnormal.values()[k] = v[k] > 0.5f ? 1 : 0;
  }
  return b;
}

nlohmann::json to_json(const AbnormalityThreshold& t) {
  return {{"q", t.q},
          {"value", t.value},
          {"pool_size", t.pool_size},
          {"population_id", t.population_id},
          {"model_id", t.model_id}};
}

AbnormalityThreshold threshold_from_json(const nlohmann::json& j) {
  try {
    AbnormalityThreshold t;
    t.q = j.at("q").get<double>();
    t.value = j.at("value").get<double>();
    t.pool_size = j.at("pool_size").get<std::size_t>();
    t.population_id = j.at("population_id").get<std::string>();
    t.model_id = j.at("model_id").get<std::string>();
    require(t.q > 0.0 && t.q < 1.0, ErrorKind::kFormat, "threshold q outside (0, 1)");
    return t;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("malformed threshold sidecar: ") + e.what());
  }
}

}  // namespace anomap
