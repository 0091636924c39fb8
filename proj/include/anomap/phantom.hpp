#pragma once

#include <cstdint>
#include <vector>

#include "anomap/volume.hpp"

namespace anomap {

/// Parameters of the synthetic two-channel (FA, MD) phantom cohort.
struct PhantomSpec {
  int n_controls = 30;
  int n_patients = 15;
  Dims dims{48, 56, 48};
  std::array<double, 3> voxel_size_mm{1.5, 1.5, 1.5};
  double anomaly_magnitude = 0.15;  // delta, must lie in (0, 0.3]
  double lesion_radius = 4.0;       // voxels
  int lesions_per_patient = 3;
  double noise_sigma = 0.02;
  double perturbation_amplitude = 0.03;
};

struct PhantomCohort {
  std::vector<Volume> volumes;
  std::vector<SubjectMeta> meta;
  std::vector<PhantomTruth> truth;
};

/// Throws kInvalidArgument when a PhantomSpec field is out of range.
void validate(const PhantomSpec& spec);

/// Builds the whole cohort. Subject i (controls first, then patients) draws
/// from stream seed + i, so any subset can be regenerated independently.
PhantomCohort synth_cohort(const PhantomSpec& spec, std::uint64_t seed);

/// One subject of the cohort. With `inject_anomalies == false` a patient is
/// returned as its anomaly-free twin (identical except for the lesions).
Volume synth_subject(const PhantomSpec& spec, std::uint64_t seed, int index,
                     bool inject_anomalies, PhantomTruth* truth = nullptr);

/// Brain support of the phantom (ellipsoid inscribed in the volume).
BrainMask phantom_support(const Dims& dims);

}  // namespace anomap
