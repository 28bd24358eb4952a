#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "psyloc/analytics.hpp"
#include "psyloc/annotation.hpp"
#include "psyloc/errors.hpp"
#include "psyloc/geometry.hpp"

namespace psyloc {

// Human-guided box regression loss.
//
//   f        = exp(-(dx^2 + dy^2) / (2 sigma(d,v)^2))
//   penalty  = 1 - f                 (0 for samples without behavioral data)
//   loss     = A * penalty + B * (1 - penalty) * default_loss
//
// dx, dy are the offsets between predicted and ground-truth box centers in
// image pixels and sigma(d,v) comes from the human accuracy table, read as
// pixels. Large center offsets make the loss saturate at A and mute the box
// tightening term; once the center is close the default loss takes over.

class NonPositiveSigma : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class MissingSigmaCell : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

enum class DefaultLossKind { smooth_l1, l1, l2 };

std::string to_string(DefaultLossKind kind);
DefaultLossKind default_loss_kind_from_string(const std::string& s);

struct DefaultLossSpec {
  DefaultLossKind kind = DefaultLossKind::smooth_l1;
  /// smooth-L1 transition point.
  double beta = 1.0;
  /// Divide coordinate errors by the ground-truth box diagonal.
  bool normalize_by_gt_diagonal = true;

  void validate() const;
};

struct PsychLossParams {
  double A = 0.05;
  double B = 0.95;
  double sigma_min = kDefaultSigmaMin;
  DefaultLossSpec default_loss;
  SigmaTable sigma_table = SigmaTable::uniform(100.0);

  /// A >= 0, B >= 0, A + B > 0, valid default loss.
  void validate() const;
};

/// Loads {A, B, sigma_min, default_loss{kind, beta}}. When the file has a
/// "sigma_csv" key (resolved relative to the file), the table is read from it.
PsychLossParams load_params(const std::filesystem::path& path);
PsychLossParams params_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json params_to_json(const PsychLossParams& params);

struct LossSample {
  Box pred_box;
  Box gt_box;
  StratumKey stratum{10, 100};
  bool has_behavioral_data = false;
};

/// Gradient with respect to (x_min, y_min, width, height) of the predicted box.
using BoxGradient = std::array<double, 4>;

struct LossValue {
  double value = 0.0;
  BoxGradient grad{};
};

/// Unnormalised Gaussian around the ground-truth center, in (0, 1].
double density(double dx, double dy, double sigma);

double human_penalty(const LossSample& sample, const SigmaTable& sigma_table);

/// Elementwise kernel applied to one normalised coordinate error.
double elementwise_loss(double error, const DefaultLossSpec& spec);
double elementwise_loss_derivative(double error, const DefaultLossSpec& spec);

/// Coordinate errors (pred - gt) after the optional diagonal normalisation.
std::array<double, 4> coordinate_errors(const Box& pred, const Box& gt, const DefaultLossSpec& spec);

double default_loss(const Box& pred, const Box& gt, const DefaultLossSpec& spec);
LossValue default_loss_with_grad(const Box& pred, const Box& gt, const DefaultLossSpec& spec);

double human_loss(const LossSample& sample, const PsychLossParams& params);
BoxGradient human_loss_grad(const LossSample& sample, const PsychLossParams& params);
LossValue human_loss_with_grad(const LossSample& sample, const PsychLossParams& params);

// ---------------------------------------------------------------------------
// Gradient verification
// ---------------------------------------------------------------------------

struct GradcheckCase {
  LossSample sample;
  PsychLossParams params;
  BoxGradient analytic{};
  BoxGradient numeric{};
  double rel_error = 0.0;
};

struct GradcheckReport {
  std::size_t n_cases = 0;
  double tolerance = 1e-6;
  double max_rel_error = 0.0;
  /// Same cases measured against a single central difference at the base step,
  /// without extrapolation. Informational.
  double max_rel_error_single_step = 0.0;
  std::size_t sigma_min_cases = 0;
  std::size_t near_beta_cases = 0;
  std::vector<GradcheckCase> failures;

  [[nodiscard]] bool passed() const { return failures.empty(); }
};

/// Central difference of f around x for each box coordinate, base step
/// 1e-4 * max(1, |coordinate|), refined by two levels of Richardson
/// extrapolation (steps h, h/2, h/4).
BoxGradient numeric_box_gradient(const std::function<double(const Box&)>& f, const Box& at, bool extrapolate = true);

/// Below this magnitude a central difference of an O(1) loss is roundoff, so
/// tiny gradients are compared absolutely.
inline constexpr double kGradientFloor = 1e-6;

/// ||a - n||_inf / max(||a||_inf, ||n||_inf, kGradientFloor).
double gradient_rel_error(const BoxGradient& analytic, const BoxGradient& numeric);

/// Random boxes, strata, sigmas (a quarter of them pinned at sigma_min),
/// weights and kernels; smooth-L1 cases put one coordinate error just either
/// side of beta.
GradcheckReport gradcheck(std::size_t n_cases, std::uint64_t seed, const PsychLossParams& base = {},
                          double tolerance = 1e-6);

nlohmann::json gradcheck_to_json(const GradcheckReport& report);

}  // namespace psyloc
