#include "psyloc/loss.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "psyloc/rng.hpp"

namespace psyloc {

std::string to_string(DefaultLossKind kind) {
  switch (kind) {
    case DefaultLossKind::smooth_l1: return "smooth_l1";
    case DefaultLossKind::l1: return "l1";
    case DefaultLossKind::l2: return "l2";
  }
  return "unknown";
}

DefaultLossKind default_loss_kind_from_string(const std::string& s) {
  if (s == "smooth_l1") return DefaultLossKind::smooth_l1;
  if (s == "l1") return DefaultLossKind::l1;
  if (s == "l2") return DefaultLossKind::l2;
  throw InvalidArgument("unknown default loss kind '" + s + "'");
}

void DefaultLossSpec::validate() const {
  if (kind == DefaultLossKind::smooth_l1 && !(beta > 0.0)) {
    throw InvalidArgument("smooth_l1 beta must be positive");
  }
}

void PsychLossParams::validate() const {
  if (!(A >= 0.0) || !(B >= 0.0) || !(A + B > 0.0)) {
    throw InvalidArgument("loss weights need A >= 0, B >= 0 and A + B > 0");
  }
  if (!(sigma_min > 0.0)) throw InvalidArgument("sigma_min must be positive");
  default_loss.validate();
}

PsychLossParams params_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  PsychLossParams p;
  p.A = j.value("A", p.A);
  p.B = j.value("B", p.B);
  p.sigma_min = j.value("sigma_min", p.sigma_min);
  if (j.contains("default_loss")) {
    const auto& d = j.at("default_loss");
    p.default_loss.kind = default_loss_kind_from_string(d.value("kind", std::string("smooth_l1")));
    p.default_loss.beta = d.value("beta", p.default_loss.beta);
    p.default_loss.normalize_by_gt_diagonal = d.value("normalize_by_gt_diagonal", true);
  }
  if (j.contains("sigma_csv")) {
    std::filesystem::path csv = j.at("sigma_csv").get<std::string>();
    if (csv.is_relative() && !base_dir.empty()) csv = base_dir / csv;
    p.sigma_table = read_sigma_csv(csv);
  }
  p.validate();
  return p;
}

PsychLossParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open params file " + path.string());
  try {
    return params_from_json(nlohmann::json::parse(in), path.parent_path());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

nlohmann::json params_to_json(const PsychLossParams& p) {
  return {{"A", p.A},
          {"B", p.B},
          {"sigma_min", p.sigma_min},
          {"default_loss",
           {{"kind", to_string(p.default_loss.kind)},
            {"beta", p.default_loss.beta},
            {"normalize_by_gt_diagonal", p.default_loss.normalize_by_gt_diagonal}}}};
}

double density(double dx, double dy, double sigma) {
  if (!(sigma > 0.0)) throw NonPositiveSigma("density needs sigma > 0");
  return std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
}

namespace {

struct PenaltyTerms {
  double penalty = 0.0;
  // d penalty / d (center x, center y)
  double d_cx = 0.0;
  double d_cy = 0.0;
};

PenaltyTerms penalty_terms(const LossSample& s, const SigmaTable& table) {
  if (!s.has_behavioral_data) return {};
  const double sigma = table.sigma(s.stratum);
  if (!(sigma > 0.0)) {
    throw MissingSigmaCell("no usable sigma for stratum (" + std::to_string(s.stratum.distance_m()) + " m, " +
                           std::to_string(s.stratum.visibility_pct()) + "%)");
  }
  const Point pc = s.pred_box.center();
  const Point gc = s.gt_box.center();
  const double dx = pc.x - gc.x;
  const double dy = pc.y - gc.y;
  const double f = density(dx, dy, sigma);
  const double s2 = sigma * sigma;
  return {1.0 - f, f * dx / s2, f * dy / s2};
}

double normaliser(const Box& gt, const DefaultLossSpec& spec) {
  if (!spec.normalize_by_gt_diagonal) return 1.0;
  const double diag = std::hypot(gt.width, gt.height);
  if (!(diag > 0.0)) throw InvalidArgument("ground-truth box has zero diagonal");
  return diag;
}

}  // namespace

double human_penalty(const LossSample& sample, const SigmaTable& sigma_table) {
  return penalty_terms(sample, sigma_table).penalty;
}

double elementwise_loss(double e, const DefaultLossSpec& spec) {
  switch (spec.kind) {
    case DefaultLossKind::smooth_l1: {
      const double a = std::abs(e);
      return a < spec.beta ? e * e / (2.0 * spec.beta) : a - spec.beta / 2.0;
    }
    case DefaultLossKind::l1: return std::abs(e);
    case DefaultLossKind::l2: return e * e;
  }
  return 0.0;
}

double elementwise_loss_derivative(double e, const DefaultLossSpec& spec) {
  const double sign = e > 0.0 ? 1.0 : (e < 0.0 ? -1.0 : 0.0);
  switch (spec.kind) {
    case DefaultLossKind::smooth_l1: return std::abs(e) < spec.beta ? e / spec.beta : sign;
    case DefaultLossKind::l1: return sign;
    case DefaultLossKind::l2: return 2.0 * e;
  }
  return 0.0;
}

std::array<double, 4> coordinate_errors(const Box& pred, const Box& gt, const DefaultLossSpec& spec) {
  const double n = normaliser(gt, spec);
  return {(pred.x_min - gt.x_min) / n, (pred.y_min - gt.y_min) / n, (pred.width - gt.width) / n,
          (pred.height - gt.height) / n};
}

double default_loss(const Box& pred, const Box& gt, const DefaultLossSpec& spec) {
  double sum = 0.0;
  for (double e : coordinate_errors(pred, gt, spec)) sum += elementwise_loss(e, spec);
  return sum;
}

LossValue default_loss_with_grad(const Box& pred, const Box& gt, const DefaultLossSpec& spec) {
  const double n = normaliser(gt, spec);
  const auto errors = coordinate_errors(pred, gt, spec);
  LossValue out;
  for (std::size_t i = 0; i < 4; ++i) {
    out.value += elementwise_loss(errors[i], spec);
    out.grad[i] = elementwise_loss_derivative(errors[i], spec) / n;
  }
  return out;
}

LossValue human_loss_with_grad(const LossSample& sample, const PsychLossParams& params) {
  const PenaltyTerms p = penalty_terms(sample, params.sigma_table);
  const LossValue base = default_loss_with_grad(sample.pred_box, sample.gt_box, params.default_loss);

  // d penalty / d box: the center moves by 1 per unit x_min and 1/2 per unit width.
  const BoxGradient dp{p.d_cx, p.d_cy, 0.5 * p.d_cx, 0.5 * p.d_cy};
  const double keep = 1.0 - p.penalty;

  LossValue out;
  out.value = params.A * p.penalty + params.B * keep * base.value;
  for (std::size_t i = 0; i < 4; ++i) {
    out.grad[i] = params.A * dp[i] - params.B * dp[i] * base.value + params.B * keep * base.grad[i];
  }
  return out;
}

double human_loss(const LossSample& sample, const PsychLossParams& params) {
  return human_loss_with_grad(sample, params).value;
}

BoxGradient human_loss_grad(const LossSample& sample, const PsychLossParams& params) {
  return human_loss_with_grad(sample, params).grad;
}

// ---------------------------------------------------------------------------

namespace {

double& coord(Box& b, std::size_t i) {
  switch (i) {
    case 0: return b.x_min;
    case 1: return b.y_min;
    case 2: return b.width;
    default: return b.height;
  }
}

double central_difference(const std::function<double(const Box&)>& f, const Box& at, std::size_t i, double h) {
  Box plus = at;
  Box minus = at;
  coord(plus, i) += h;
  coord(minus, i) -= h;
  return (f(plus) - f(minus)) / (2.0 * h);
}

}  // namespace

BoxGradient numeric_box_gradient(const std::function<double(const Box&)>& f, const Box& at, bool extrapolate) {
  BoxGradient g{};
  Box probe = at;
  for (std::size_t i = 0; i < 4; ++i) {
    const double h = 1e-4 * std::max(1.0, std::abs(coord(probe, i)));
    const double d1 = central_difference(f, at, i, h);
    if (!extrapolate) {
      g[i] = d1;
      continue;
    }
    const double d2 = central_difference(f, at, i, h / 2.0);
    const double d4 = central_difference(f, at, i, h / 4.0);
    // Each level cancels the next even power of h in the truncation error.
    const double r1 = (4.0 * d2 - d1) / 3.0;
    const double r2 = (4.0 * d4 - d2) / 3.0;
    g[i] = (16.0 * r2 - r1) / 15.0;
  }
  return g;
}

double gradient_rel_error(const BoxGradient& a, const BoxGradient& n) {
  double diff = 0.0;
  double scale = kGradientFloor;
  for (std::size_t i = 0; i < 4; ++i) {
    diff = std::max(diff, std::abs(a[i] - n[i]));
    scale = std::max({scale, std::abs(a[i]), std::abs(n[i])});
  }
  return diff / scale;
}

namespace {

// Coordinates whose kernel has a kink (smooth-L1 at |e| = beta, L1 at 0) must
// sit further from it than the widest finite-difference stencil reaches.
bool clear_of_kinks(const LossSample& s, const DefaultLossSpec& spec) {
  const double n = spec.normalize_by_gt_diagonal ? std::hypot(s.gt_box.width, s.gt_box.height) : 1.0;
  const auto errors = coordinate_errors(s.pred_box, s.gt_box, spec);
  const std::array<double, 4> pred{s.pred_box.x_min, s.pred_box.y_min, s.pred_box.width, s.pred_box.height};
  for (std::size_t i = 0; i < 4; ++i) {
    const double reach = 4.0 * 1e-4 * std::max(1.0, std::abs(pred[i])) / n;
    const double a = std::abs(errors[i]);
    if (spec.kind == DefaultLossKind::smooth_l1 && std::abs(a - spec.beta) < reach) return false;
    if (spec.kind == DefaultLossKind::l1 && a < reach) return false;
  }
  return true;
}

}  // namespace

GradcheckReport gradcheck(std::size_t n_cases, std::uint64_t seed, const PsychLossParams& base, double tolerance) {
  base.validate();
  GradcheckReport report;
  report.n_cases = n_cases;
  report.tolerance = tolerance;
  Rng rng(seed);

  for (std::size_t c = 0; c < n_cases; ++c) {
    GradcheckCase gc;
    gc.params = base;
    auto& p = gc.params;

    if (rng.bernoulli(0.2)) {
      p.A = 0.05;
      p.B = 0.95;
    } else {
      p.A = rng.uniform(0.0, 1.0);
      p.B = rng.uniform(0.01, 1.0);
    }
    const double kind_draw = rng.uniform();
    p.default_loss.kind = kind_draw < 0.7 ? DefaultLossKind::smooth_l1
                          : kind_draw < 0.85 ? DefaultLossKind::l1
                                             : DefaultLossKind::l2;
    p.default_loss.beta = rng.bernoulli(0.5) ? base.default_loss.beta : rng.uniform(0.05, 2.0);

    StratumGrid<SigmaCell> cells;
    for (auto& cell : cells) cell.sigma = rng.uniform(p.sigma_min, 100.0);
    const StratumKey stratum = StratumKey::from_index(rng.index(kStrataCount));
    const bool pin_sigma_min = rng.bernoulli(0.25);
    if (pin_sigma_min) cells[stratum].sigma = p.sigma_min;
    p.sigma_table = SigmaTable(cells);
    const double sigma = p.sigma_table.sigma(stratum);

    auto& s = gc.sample;
    s.stratum = stratum;
    s.has_behavioral_data = rng.bernoulli(0.8);
    const bool straddle = p.default_loss.kind == DefaultLossKind::smooth_l1 && rng.bernoulli(0.5);

    for (int attempt = 0;; ++attempt) {
      s.gt_box = Box{rng.uniform(0.0, 850.0), rng.uniform(0.0, 850.0), rng.uniform(5.0, 150.0),
                     rng.uniform(5.0, 150.0)};
      const Point gcen = s.gt_box.center();
      const double w = s.gt_box.width * std::exp(0.3 * rng.normal());
      const double h = s.gt_box.height * std::exp(0.3 * rng.normal());
      const double cx = gcen.x + 1.5 * sigma * rng.normal();
      const double cy = gcen.y + 1.5 * sigma * rng.normal();
      s.pred_box = Box{cx - w / 2.0, cy - h / 2.0, w, h};
      if (straddle) {
        // Put one coordinate error just below or just above beta.
        const std::size_t i = rng.index(4);
        const double diag = std::hypot(s.gt_box.width, s.gt_box.height);
        const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
        const double e = p.default_loss.beta * (1.0 + side * rng.uniform(0.02, 0.2));
        const std::array<double, 4> gt{s.gt_box.x_min, s.gt_box.y_min, s.gt_box.width, s.gt_box.height};
        coord(s.pred_box, i) = gt[i] + (rng.bernoulli(0.5) ? e : -e) * diag;
        if (!(s.pred_box.width > 0.0 && s.pred_box.height > 0.0)) continue;
      }
      if (clear_of_kinks(s, p.default_loss) || attempt > 1000) break;
    }

    if (pin_sigma_min && s.has_behavioral_data) ++report.sigma_min_cases;
    if (straddle) ++report.near_beta_cases;

    const LossSample sample = s;
    const PsychLossParams params = p;
    const auto f = [&](const Box& b) {
      LossSample probe = sample;
      probe.pred_box = b;
      return human_loss(probe, params);
    };
    gc.analytic = human_loss_grad(s, p);
    gc.numeric = numeric_box_gradient(f, s.pred_box, true);
    gc.rel_error = gradient_rel_error(gc.analytic, gc.numeric);
    const double single = gradient_rel_error(gc.analytic, numeric_box_gradient(f, s.pred_box, false));

    report.max_rel_error = std::max(report.max_rel_error, gc.rel_error);
    report.max_rel_error_single_step = std::max(report.max_rel_error_single_step, single);
    if (!(gc.rel_error <= tolerance)) report.failures.push_back(std::move(gc));
  }
  return report;
}

nlohmann::json gradcheck_to_json(const GradcheckReport& report) {
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& f : report.failures) {
    failures.push_back({{"pred_box", f.sample.pred_box},
                        {"gt_box", f.sample.gt_box},
                        {"distance_m", f.sample.stratum.distance_m()},
                        {"visibility_pct", f.sample.stratum.visibility_pct()},
                        {"has_behavioral_data", f.sample.has_behavioral_data},
                        {"sigma", f.params.sigma_table.sigma(f.sample.stratum)},
                        {"A", f.params.A},
                        {"B", f.params.B},
                        {"kind", to_string(f.params.default_loss.kind)},
                        {"beta", f.params.default_loss.beta},
                        {"analytic", f.analytic},
                        {"numeric", f.numeric},
                        {"rel_error", f.rel_error}});
  }
  return {{"n_cases", report.n_cases},
          {"tolerance", report.tolerance},
          {"max_rel_error", report.max_rel_error},
          {"max_rel_error_single_step", report.max_rel_error_single_step},
          {"sigma_min_cases", report.sigma_min_cases},
          {"near_beta_cases", report.near_beta_cases},
          {"passed", report.passed()},
          {"failures", std::move(failures)}};
}

}  // namespace psyloc
