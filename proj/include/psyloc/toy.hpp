#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "psyloc/annotation.hpp"
#include "psyloc/evaluate.hpp"
#include "psyloc/geometry.hpp"
#include "psyloc/loss.hpp"

namespace psyloc {

// Desk-scale stand-in for detector training: every scene holds one person box
// in a 1000x1000 frame and a feature vector that observes the box through
// noise growing with distance and occlusion. A small regressor maps features
// to (x_min, y_min, width, height) and is trained with either the default
// loss or the human-guided loss.

struct ToyConfig {
  double frame_px = 1000.0;
  /// Noise std at (10 m, 100%); scales by (distance/10) * (100/visibility).
  double base_noise_px = 0.1;
  /// Person box height at 10 m; shrinks as 10/distance.
  double person_height_10m_px = 150.0;
  std::size_t distractor_dims = 4;
  std::size_t n_per_stratum = 100;
  double behavioral_fraction = 0.12;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double learning_rate = 2e-4;
  double clip_norm = 10.0;
  /// 0 selects the linear regressor.
  std::size_t hidden_units = 0;
  double init_scale = 0.01;

  void validate() const;
};

ToyConfig toy_config_from_json(const nlohmann::json& j, ToyConfig base = {});
nlohmann::json toy_config_to_json(const ToyConfig& c);

/// Default sigma table for the proxy: a smooth human-accuracy surface that
/// falls with distance and occlusion (99% at 10 m/100%, 5% at 90 m/10%).
SigmaTable default_toy_sigma_table();

struct SyntheticScene {
  std::string scene_id;
  StratumKey stratum{10, 100};
  Box gt_box;
  std::vector<double> features;
  bool has_behavioral_data = false;
  /// Split unit (actor stand-in): 0..99.
  int group = 0;

  friend bool operator==(const SyntheticScene&, const SyntheticScene&) = default;
};

struct SyntheticDataset {
  std::vector<SyntheticScene> train;
  std::vector<SyntheticScene> val;
  std::vector<SyntheticScene> test;
};

double noise_std_px(const ToyConfig& config, const StratumKey& stratum);

/// Deterministic in (config, n_per_stratum, seed). Groups 0..99 are shuffled
/// and split 80/10/10; scenes inherit their group's split.
SyntheticDataset generate_dataset(const ToyConfig& config, std::size_t n_per_stratum, std::uint64_t seed);

void write_scenes(std::ostream& out, std::span<const SyntheticScene> scenes);
std::vector<SyntheticScene> read_scenes(std::istream& in);
std::vector<SyntheticScene> read_scenes(const std::filesystem::path& path);

/// Linear or one-hidden-layer (tanh) map from features to a box. Outputs are
/// box coordinates divided by the frame size.
class Regressor {
 public:
  Regressor() = default;
  Regressor(std::size_t input_dim, std::size_t hidden_units, double frame_px);

  void initialize(std::uint64_t seed, double scale);

  /// Inputs are standardised as (x - mean) / scale before the first layer.
  void set_input_normalization(std::vector<double> mean, std::vector<double> scale);
  /// Sets the output bias so an all-mean input predicts `box`.
  void set_output_bias(const Box& box);

  [[nodiscard]] Box predict(std::span<const double> features) const;
  /// Adds d loss / d params for one sample into `grad`, given d loss / d box.
  void accumulate_gradient(std::span<const double> features, const BoxGradient& d_box,
                           std::vector<double>& grad) const;

  [[nodiscard]] std::size_t input_dim() const { return input_dim_; }
  [[nodiscard]] std::size_t hidden_units() const { return hidden_; }
  [[nodiscard]] double frame_px() const { return frame_px_; }
  [[nodiscard]] std::vector<double>& params() { return params_; }
  [[nodiscard]] const std::vector<double>& params() const { return params_; }
  [[nodiscard]] bool finite() const;

  [[nodiscard]] nlohmann::json to_json() const;
  static Regressor from_json(const nlohmann::json& j);

  friend bool operator==(const Regressor&, const Regressor&) = default;

 private:
  [[nodiscard]] std::vector<double> standardize(std::span<const double> raw) const;
  void forward(std::span<const double> x, std::array<double, 4>& out, std::vector<double>* hidden) const;

  std::size_t input_dim_ = 0;
  std::size_t hidden_ = 0;
  double frame_px_ = 1000.0;
  std::vector<double> params_;
  std::vector<double> input_mean_;
  std::vector<double> input_scale_;
};

enum class LossMode { baseline, psych };

std::string to_string(LossMode mode);
LossMode loss_mode_from_string(const std::string& s);

class DivergedLoss : public Error {
 public:
  using Error::Error;
};

struct TrainResult {
  Regressor model;
  /// Mean training loss before the first step, then after every epoch.
  std::vector<double> loss_curve;
};

/// Mini-batch gradient descent with a fixed step and gradient-norm clipping.
/// Baseline minimises the default loss alone; psych minimises the human loss
/// with `params`. Deterministic in (scenes, mode, params, config, seed).
TrainResult train(std::span<const SyntheticScene> scenes, LossMode mode, const PsychLossParams& params,
                  const ToyConfig& config, std::uint64_t seed);

/// Mean loss of `model` on `scenes` under the given mode.
double mean_loss(const Regressor& model, std::span<const SyntheticScene> scenes, LossMode mode,
                 const PsychLossParams& params);

/// One confidence-1 prediction per scene.
StratifiedReport evaluate(const Regressor& model, std::span<const SyntheticScene> test_scenes);

struct ToyRun {
  std::uint64_t seed = 0;
  LossMode mode = LossMode::baseline;
  TrainResult training;
  StratifiedReport report;
};

/// Generate, train and evaluate one (seed, mode).
ToyRun run_toy(const ToyConfig& config, const PsychLossParams& params, LossMode mode, std::uint64_t seed);

}  // namespace psyloc
