#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "guidedflow/egoflow.hpp"
#include "guidedflow/estimator.hpp"
#include "guidedflow/types.hpp"

namespace guidedflow {

/// Mean endpoint error over jointly valid pixels (pixels).
double epe(const FlowField& pred, const FlowField& gt);

/// KITTI outlier rate: percentage of jointly valid pixels whose endpoint
/// error exceeds 3 px and 5% of the ground-truth magnitude.
double fl(const FlowField& pred, const FlowField& gt);

struct ImageRecord {
  std::string image;
  std::string variant;
  double epe = 0.0;
  double fl = 0.0;
  double density = 0.0;  // percent of ground-truth pixels evaluated
  std::string error;     // nonempty when the scene failed for this variant
};

struct VariantAggregate {
  std::string variant;
  int images = 0;
  double epe = 0.0;
  double fl = 0.0;
  double density = 0.0;
};

struct EvalReport {
  std::vector<ImageRecord> records;
  std::vector<VariantAggregate> aggregates;
  int errors = 0;
};

struct BenchmarkConfig {
  bool unguided = true;
  bool gt_guided = true;
  bool sensor_guided = true;
  double density = 0.03;  // ground-truth sampling fraction
  double noise = 3.0;     // hint perturbation amplitude (px)
  ModulationParams mod;
  PyramidConfig pyramid;
  EgoHintsConfig ego;
  std::uint64_t seed = 0;
  int jobs = 1;
  bool pooled = false;  // aggregate per-pixel instead of per-image means
};

/// Runs the configured variants over every scene listed in the dataset
/// manifest. Scenes that fail to load or process yield error records and the
/// run continues. Results are deterministic for a given seed and independent
/// of `jobs`.
EvalReport run_benchmark(const std::filesystem::path& dataset, const BenchmarkConfig& cfg);

/// Long-form CSV (`image,variant,epe,fl,density,error`) with aggregate rows;
/// optional provenance comment lines first. Byte-deterministic.
std::string report_csv(const EvalReport& report,
                       const std::vector<std::string>& provenance = {});

}  // namespace guidedflow
