#include "anomap/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "anomap/error.hpp"
#include "anomap/rng.hpp"

namespace anomap {

namespace {

constexpr int kFa = 0;
constexpr int kMd = 1;
constexpr double kSupportFraction = 0.44;  // ellipsoid semi-axis / dim

struct Blob {
  double cz, cy, cx;
  double sigma;
  double amplitude;
};

struct Geometry {
  double cz, cy, cx;
  double az, ay, ax;
};

Geometry geometry(const Dims& d) {
  return {(d.depth - 1) / 2.0,        (d.height - 1) / 2.0,
          (d.width - 1) / 2.0,        kSupportFraction * d.depth,
          kSupportFraction * d.height, kSupportFraction * d.width};
}

double ellipsoid_radius2(const Geometry& g, double z, double y, double x) {
  const double dz = (z - g.cz) / g.az;
  const double dy = (y - g.cy) / g.ay;
  const double dx = (x - g.cx) / g.ax;
  return dz * dz + dy * dy + dx * dx;
}

Voxel random_brain_point(const Geometry& g, Rng& rng, double shrink) {
  for (;;) {
    const double u = rng.uniform(-1.0, 1.0);
    const double v = rng.uniform(-1.0, 1.0);
    const double w = rng.uniform(-1.0, 1.0);
    if (u * u + v * v + w * w > 1.0) continue;
    return {static_cast<int>(std::lround(g.cz + shrink * u * g.az)),
            static_cast<int>(std::lround(g.cy + shrink * v * g.ay)),
            static_cast<int>(std::lround(g.cx + shrink * w * g.ax))};
  }
}

void add_blob(std::vector<double>& field, const Dims& d, const BrainMask& support,
              const Blob& b) {
  const double inv = 1.0 / (2.0 * b.sigma * b.sigma);
  const int reach = static_cast<int>(std::ceil(4.0 * b.sigma));
  const int z0 = std::max(0, static_cast<int>(b.cz) - reach);
  const int z1 = std::min(d.depth - 1, static_cast<int>(b.cz) + reach);
  const int y0 = std::max(0, static_cast<int>(b.cy) - reach);
  const int y1 = std::min(d.height - 1, static_cast<int>(b.cy) + reach);
  const int x0 = std::max(0, static_cast<int>(b.cx) - reach);
  const int x1 = std::min(d.width - 1, static_cast<int>(b.cx) + reach);
  for (int z = z0; z <= z1; ++z) {
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        if (!support.at(z, y, x)) continue;
        const double r2 = (z - b.cz) * (z - b.cz) + (y - b.cy) * (y - b.cy) +
                          (x - b.cx) * (x - b.cx);
        field[support.index(z, y, x)] += b.amplitude * std::exp(-r2 * inv);
      }
    }
  }
}

// Shared anatomy: a base level plus smooth blobs per channel, and one small
// saturating structure per channel (bright tract in FA, ventricle in MD) so
// every subject spans the full [0, 1] range and min-max normalization is an
// identity on phantom data.
std::vector<std::vector<double>> build_template(const Dims& d, const BrainMask& support,
                                                std::uint64_t seed) {
  const Geometry g = geometry(d);
  Rng rng(derive_seed(seed, 0x7E3A11ULL));
  const double min_axis = std::min({g.az, g.ay, g.ax});
  std::vector<std::vector<double>> channels(2, std::vector<double>(d.voxels(), 0.0));
  const double base[2] = {0.40, 0.45};
  for (int c = 0; c < 2; ++c) {
    for (std::size_t i = 0; i < d.voxels(); ++i) {
      if (support.values()[i]) channels[c][i] = base[c];
    }
    for (int k = 0; k < 14; ++k) {
      const Voxel p = random_brain_point(g, rng, 0.9);
      add_blob(channels[c], d, support,
               {static_cast<double>(p.z), static_cast<double>(p.y),
                static_cast<double>(p.x), rng.uniform(0.12, 0.30) * min_axis,
                rng.uniform(-0.15, 0.15)});
    }
  }
  // Saturating structures near (but not at) the centre.
  add_blob(channels[kFa], d, support,
           {g.cz, g.cy - 0.35 * g.ay, g.cx, 0.08 * min_axis, 1.2});
  add_blob(channels[kMd], d, support,
           {g.cz, g.cy + 0.30 * g.ay, g.cx, 0.08 * min_axis, 1.2});
  return channels;
}

std::string subject_name(const PhantomSpec& spec, int index) {
  char buf[32];
  if (index < spec.n_controls) {
    std::snprintf(buf, sizeof buf, "ctl_%03d", index);
  } else {
    std::snprintf(buf, sizeof buf, "pat_%03d", index - spec.n_controls);
  }
  return buf;
}

}  // namespace

void validate(const PhantomSpec& spec) {
  require(spec.n_controls > 0 && spec.n_patients > 0, ErrorKind::kInvalidArgument,
          "phantom cohort needs n_controls > 0 and n_patients > 0");
  require(spec.dims.depth > 0 && spec.dims.height > 0 && spec.dims.width > 0,
          ErrorKind::kInvalidArgument, "phantom dims must be positive");
  require(spec.anomaly_magnitude > 0.0 && spec.anomaly_magnitude <= 0.3,
          ErrorKind::kInvalidArgument,
          "anomaly magnitude must lie in (0, 0.3], got " +
              std::to_string(spec.anomaly_magnitude));
  require(spec.noise_sigma >= 0.0, ErrorKind::kInvalidArgument,
          "noise sigma must be >= 0");
  require(spec.lesions_per_patient > 0, ErrorKind::kInvalidArgument,
          "lesions_per_patient must be > 0");
  require(spec.lesion_radius > 0.0, ErrorKind::kInvalidArgument,
          "lesion radius must be > 0");
  const Geometry g = geometry(spec.dims);
  const double min_axis = std::min({g.az, g.ay, g.ax});
  require(spec.lesion_radius < 0.8 * min_axis, ErrorKind::kInvalidArgument,
          "lesion radius " + std::to_string(spec.lesion_radius) +
              " is larger than the brain support allows (" +
              std::to_string(0.8 * min_axis) + ")");
}

BrainMask phantom_support(const Dims& dims) {
  const Geometry g = geometry(dims);
  BrainMask mask(dims);
  for (int z = 0; z < dims.depth; ++z) {
    for (int y = 0; y < dims.height; ++y) {
      for (int x = 0; x < dims.width; ++x) {
        if (ellipsoid_radius2(g, z, y, x) <= 1.0) mask.set(z, y, x, true);
      }
    }
  }
  return mask;
}

Volume synth_subject(const PhantomSpec& spec, std::uint64_t seed, int index,
                     bool inject_anomalies, PhantomTruth* truth) {
  validate(spec);
  const int total = spec.n_controls + spec.n_patients;
  require(index >= 0 && index < total, ErrorKind::kInvalidArgument,
          "subject index out of range");
  const Dims& d = spec.dims;
  const Geometry g = geometry(d);
  const BrainMask support = phantom_support(d);
  auto fields = build_template(d, support, seed);
  const bool patient = index >= spec.n_controls;
  const double min_axis = std::min({g.az, g.ay, g.ax});

  Rng rng(seed + static_cast<std::uint64_t>(index));
  for (int c = 0; c < 2; ++c) {
    for (int k = 0; k < 4; ++k) {
      const Voxel p = random_brain_point(g, rng, 0.8);
      add_blob(fields[c], d, support,
               {static_cast<double>(p.z), static_cast<double>(p.y),
                static_cast<double>(p.x), rng.uniform(0.25, 0.45) * min_axis,
                rng.normal(0.0, spec.perturbation_amplitude)});
    }
  }
  for (int c = 0; c < 2; ++c) {
    for (std::size_t i = 0; i < d.voxels(); ++i) {
      if (support.values()[i]) fields[c][i] += rng.normal(0.0, spec.noise_sigma);
    }
  }

  PhantomTruth record;
  record.subject_id = subject_name(spec, index);
  record.anomaly_mask = BrainMask(d);
  record.brain_support = support.count();
  if (patient) {
    // Lesions come from their own stream so the anomaly-free twin shares
    // every other draw with the patient.
    Rng lesion_rng(derive_seed(seed + static_cast<std::uint64_t>(index), 0x1E5105ULL));
    const double r = spec.lesion_radius;
    const int reach = static_cast<int>(std::ceil(r));
    for (int l = 0; l < spec.lesions_per_patient; ++l) {
      Voxel center;
      for (int attempt = 0;; ++attempt) {
        require(attempt < 10000, ErrorKind::kInvalidArgument,
                "could not place a lesion of radius " + std::to_string(r) +
                    " inside the brain support");
        center = random_brain_point(g, lesion_rng, 1.0);
        bool inside = true;
        for (int dz = -reach; dz <= reach && inside; ++dz) {
          for (int dy = -reach; dy <= reach && inside; ++dy) {
            for (int dx = -reach; dx <= reach && inside; ++dx) {
              if (dz * dz + dy * dy + dx * dx > r * r) continue;
              const int z = center.z + dz, y = center.y + dy, x = center.x + dx;
              inside = z >= 0 && y >= 0 && x >= 0 && z < d.depth && y < d.height &&
                       x < d.width && support.at(z, y, x);
            }
          }
        }
        if (inside) break;
      }
      record.lesion_centers.push_back(center);
      record.anomaly_magnitude.push_back(spec.anomaly_magnitude);
      for (int dz = -reach; dz <= reach; ++dz) {
        for (int dy = -reach; dy <= reach; ++dy) {
          for (int dx = -reach; dx <= reach; ++dx) {
            if (dz * dz + dy * dy + dx * dx > r * r) continue;
            record.anomaly_mask.set(center.z + dz, center.y + dy, center.x + dx, true);
          }
        }
      }
    }
    if (inject_anomalies) {
      // Early-PD-like diffusion change: FA drops, MD rises. Overlapping
      // lesions do not stack.
      const auto mask = record.anomaly_mask.values();
      for (std::size_t i = 0; i < d.voxels(); ++i) {
        if (!mask[i]) continue;
        fields[kFa][i] -= spec.anomaly_magnitude;
        fields[kMd][i] += spec.anomaly_magnitude;
      }
    }
  }

  Volume volume(record.subject_id, d, 2, spec.voxel_size_mm, {"FA", "MD"});
  for (int c = 0; c < 2; ++c) {
    auto out = volume.channel(c);
    for (std::size_t i = 0; i < d.voxels(); ++i) {
      out[i] = static_cast<float>(std::clamp(fields[c][i], 0.0, 1.0));
    }
  }
  if (truth != nullptr) {
    if (!inject_anomalies) {
      record.anomaly_mask = BrainMask(d);
      record.lesion_centers.clear();
      record.anomaly_magnitude.clear();
    }
    *truth = std::move(record);
  }
  return volume;
}

PhantomCohort synth_cohort(const PhantomSpec& spec, std::uint64_t seed) {
  validate(spec);
  PhantomCohort cohort;
  const int total = spec.n_controls + spec.n_patients;
  Rng meta_rng(derive_seed(seed, 0x3E7AULL));
  // Fixed female counts keep balanced splits attainable.
  std::vector<Sex> control_sex(spec.n_controls, Sex::kMale);
  const int control_f = static_cast<int>(std::lround(0.4 * spec.n_controls));
  std::fill(control_sex.begin(), control_sex.begin() + control_f, Sex::kFemale);
  meta_rng.shuffle(control_sex.begin(), control_sex.end());
  std::vector<Sex> patient_sex(spec.n_patients, Sex::kMale);
  const int patient_f = static_cast<int>(std::lround(0.37 * spec.n_patients));
  std::fill(patient_sex.begin(), patient_sex.begin() + patient_f, Sex::kFemale);
  meta_rng.shuffle(patient_sex.begin(), patient_sex.end());

  for (int i = 0; i < total; ++i) {
    const bool patient = i >= spec.n_controls;
    PhantomTruth truth;
    cohort.volumes.push_back(synth_subject(spec, seed, i, true, &truth));
    SubjectMeta meta;
    meta.subject_id = truth.subject_id;
    meta.age = std::max(20.0, meta_rng.normal(patient ? 62.0 : 61.0, 9.0));
    meta.sex = patient ? patient_sex[i - spec.n_controls] : control_sex[i];
    meta.cohort = patient ? Cohort::kPatient : Cohort::kControl;
    cohort.meta.push_back(std::move(meta));
    cohort.truth.push_back(std::move(truth));
  }
  return cohort;
}

}  // namespace anomap
