#include "psyloc/toy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>

#include "psyloc/errors.hpp"
#include "psyloc/rng.hpp"

namespace psyloc {

void ToyConfig::validate() const {
  if (!(frame_px > 0.0)) throw InvalidArgument("frame_px must be positive");
  if (!(base_noise_px >= 0.0)) throw InvalidArgument("base_noise_px must be non-negative");
  if (!(person_height_10m_px > 0.0) || person_height_10m_px > frame_px / 2.0) {
    throw InvalidArgument("person_height_10m_px must be in (0, frame_px/2]");
  }
  if (n_per_stratum < 10) throw InvalidArgument("n_per_stratum must be at least 10");
  if (!(behavioral_fraction >= 0.0 && behavioral_fraction <= 1.0)) {
    throw InvalidArgument("behavioral_fraction must be in [0,1]");
  }
  if (batch_size == 0) throw InvalidArgument("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning_rate must be positive");
  if (!(clip_norm > 0.0)) throw InvalidArgument("clip_norm must be positive");
}

ToyConfig toy_config_from_json(const nlohmann::json& j, ToyConfig c) {
  c.frame_px = j.value("frame_px", c.frame_px);
  c.base_noise_px = j.value("base_noise_px", c.base_noise_px);
  c.person_height_10m_px = j.value("person_height_10m_px", c.person_height_10m_px);
  c.distractor_dims = j.value("distractor_dims", c.distractor_dims);
  c.n_per_stratum = j.value("n_per_stratum", c.n_per_stratum);
  c.behavioral_fraction = j.value("behavioral_fraction", c.behavioral_fraction);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.hidden_units = j.value("hidden_units", c.hidden_units);
  c.init_scale = j.value("init_scale", c.init_scale);
  c.validate();
  return c;
}

nlohmann::json toy_config_to_json(const ToyConfig& c) {
  return {{"frame_px", c.frame_px},
          {"base_noise_px", c.base_noise_px},
          {"person_height_10m_px", c.person_height_10m_px},
          {"distractor_dims", c.distractor_dims},
          {"n_per_stratum", c.n_per_stratum},
          {"behavioral_fraction", c.behavioral_fraction},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"clip_norm", c.clip_norm},
          {"hidden_units", c.hidden_units},
          {"init_scale", c.init_scale}};
}

SigmaTable default_toy_sigma_table() {
  StratumGrid<SigmaCell> cells;
  for (const auto& key : all_strata()) {
    const double far = (key.distance_m() - 10.0) / 80.0;
    const double occluded = (100.0 - key.visibility_pct()) / 90.0;
    const double acc = 100.0 * std::clamp(1.0 - 0.5 * std::pow(far, 1.2) - 0.45 * std::pow(occluded, 1.5), 0.05, 0.99);
    SigmaCell c;
    c.accuracy_pct = acc;
    c.sigma = std::max(kDefaultSigmaMin, 100.0 - acc);
    cells[key] = c;
  }
  return SigmaTable(cells);
}

double noise_std_px(const ToyConfig& config, const StratumKey& stratum) {
  return config.base_noise_px * (stratum.distance_m() / 10.0) * (100.0 / stratum.visibility_pct());
}

SyntheticDataset generate_dataset(const ToyConfig& config, std::size_t n_per_stratum, std::uint64_t seed) {
  config.validate();
  if (n_per_stratum < 10) throw InvalidArgument("n_per_stratum must be at least 10");
  Rng rng(seed);

  std::vector<int> groups(100);
  std::iota(groups.begin(), groups.end(), 0);
  rng.shuffle(groups);
  std::array<int, 100> split{};  // 0 train, 1 val, 2 test
  for (std::size_t i = 0; i < groups.size(); ++i) {
    split[static_cast<std::size_t>(groups[i])] = i < 80 ? 0 : (i < 90 ? 1 : 2);
  }

  const double F = config.frame_px;
  SyntheticDataset ds;
  for (const auto& key : all_strata()) {
    const double sd = noise_std_px(config, key);
    for (std::size_t i = 0; i < n_per_stratum; ++i) {
      SyntheticScene s;
      s.stratum = key;
      s.group = static_cast<int>(i * 100 / n_per_stratum);
      s.scene_id = "d" + std::to_string(key.distance_m()) + "_v" + std::to_string(key.visibility_pct()) + "_" +
                   std::to_string(i);
      const double h = config.person_height_10m_px * (10.0 / key.distance_m()) * std::exp(0.1 * rng.normal());
      const double w = 0.45 * h * std::exp(0.1 * rng.normal());
      const double cx = rng.uniform(w / 2.0 + 1.0, F - w / 2.0 - 1.0);
      const double cy = rng.uniform(h / 2.0 + 1.0, F - h / 2.0 - 1.0);
      s.gt_box = Box{cx - w / 2.0, cy - h / 2.0, w, h};

      s.features.reserve(4 + config.distractor_dims);
      s.features.push_back((cx + sd * rng.normal()) / F);
      s.features.push_back((cy + sd * rng.normal()) / F);
      s.features.push_back((w + sd * rng.normal()) / F);
      s.features.push_back((h + sd * rng.normal()) / F);
      for (std::size_t k = 0; k < config.distractor_dims; ++k) s.features.push_back(rng.uniform());

      const bool behavioral = rng.bernoulli(config.behavioral_fraction);
      switch (split[static_cast<std::size_t>(s.group)]) {
        case 0:
          s.has_behavioral_data = behavioral;
          ds.train.push_back(std::move(s));
          break;
        case 1: ds.val.push_back(std::move(s)); break;
        default: ds.test.push_back(std::move(s)); break;
      }
    }
  }
  return ds;
}

void write_scenes(std::ostream& out, std::span<const SyntheticScene> scenes) {
  for (const auto& s : scenes) {
    nlohmann::json j{{"scene_id", s.scene_id},
                     {"distance_m", s.stratum.distance_m()},
                     {"visibility_pct", s.stratum.visibility_pct()},
                     {"gt_box", s.gt_box},
                     {"features", s.features},
                     {"has_behavioral_data", s.has_behavioral_data},
                     {"group", s.group}};
    out << j.dump() << '\n';
  }
}

std::vector<SyntheticScene> read_scenes(std::istream& in) {
  std::vector<SyntheticScene> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      SyntheticScene s;
      s.scene_id = j.at("scene_id").get<std::string>();
      s.stratum = StratumKey(j.at("distance_m").get<int>(), j.at("visibility_pct").get<int>());
      s.gt_box = j.at("gt_box").get<Box>();
      s.features = j.at("features").get<std::vector<double>>();
      s.has_behavioral_data = j.value("has_behavioral_data", false);
      s.group = j.value("group", 0);
      out.push_back(std::move(s));
    } catch (const std::exception& e) {
      throw ParseError("scenes line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<SyntheticScene> read_scenes(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open scenes file " + path.string());
  return read_scenes(in);
}

// ---------------------------------------------------------------------------
// Regressor
// ---------------------------------------------------------------------------

Regressor::Regressor(std::size_t input_dim, std::size_t hidden_units, double frame_px)
    : input_dim_(input_dim), hidden_(hidden_units), frame_px_(frame_px) {
  if (input_dim == 0) throw InvalidArgument("regressor needs at least one input");
  const std::size_t n = hidden_ == 0 ? 4 * input_dim_ + 4 : hidden_ * input_dim_ + hidden_ + 4 * hidden_ + 4;
  params_.assign(n, 0.0);
}

void Regressor::initialize(std::uint64_t seed, double scale) {
  Rng rng(seed);
  for (auto& p : params_) p = scale * rng.normal();
}

void Regressor::set_input_normalization(std::vector<double> mean, std::vector<double> scale) {
  if (mean.size() != input_dim_ || scale.size() != input_dim_) {
    throw InvalidArgument("normalization vectors must match the input dimension");
  }
  for (double s : scale) {
    if (!(s > 0.0) || !std::isfinite(s)) throw InvalidArgument("normalization scale must be positive");
  }
  input_mean_ = std::move(mean);
  input_scale_ = std::move(scale);
}

void Regressor::set_output_bias(const Box& box) {
  const std::size_t b = hidden_ == 0 ? 4 * input_dim_ : hidden_ * input_dim_ + hidden_ + 4 * hidden_;
  params_[b + 0] = box.x_min / frame_px_;
  params_[b + 1] = box.y_min / frame_px_;
  params_[b + 2] = box.width / frame_px_;
  params_[b + 3] = box.height / frame_px_;
}

std::vector<double> Regressor::standardize(std::span<const double> raw) const {
  if (raw.size() != input_dim_) throw InvalidArgument("feature vector has the wrong dimension");
  std::vector<double> x(raw.begin(), raw.end());
  if (!input_mean_.empty()) {
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = (x[j] - input_mean_[j]) / input_scale_[j];
  }
  return x;
}

void Regressor::forward(std::span<const double> raw, std::array<double, 4>& out, std::vector<double>* hidden) const {
  const std::vector<double> x = standardize(raw);
  const double* p = params_.data();
  if (hidden_ == 0) {
    for (std::size_t k = 0; k < 4; ++k) {
      double acc = p[4 * input_dim_ + k];
      for (std::size_t j = 0; j < input_dim_; ++j) acc += p[k * input_dim_ + j] * x[j];
      out[k] = acc;
    }
    return;
  }
  std::vector<double> local;
  std::vector<double>& h = hidden != nullptr ? *hidden : local;
  h.assign(hidden_, 0.0);
  const double* b1 = p + hidden_ * input_dim_;
  const double* w2 = b1 + hidden_;
  const double* b2 = w2 + 4 * hidden_;
  for (std::size_t u = 0; u < hidden_; ++u) {
    double acc = b1[u];
    for (std::size_t j = 0; j < input_dim_; ++j) acc += p[u * input_dim_ + j] * x[j];
    h[u] = std::tanh(acc);
  }
  for (std::size_t k = 0; k < 4; ++k) {
    double acc = b2[k];
    for (std::size_t u = 0; u < hidden_; ++u) acc += w2[k * hidden_ + u] * h[u];
    out[k] = acc;
  }
}

Box Regressor::predict(std::span<const double> features) const {
  std::array<double, 4> o{};
  forward(features, o, nullptr);
  return Box{o[0] * frame_px_, o[1] * frame_px_, o[2] * frame_px_, o[3] * frame_px_};
}

void Regressor::accumulate_gradient(std::span<const double> raw, const BoxGradient& d_box,
                                    std::vector<double>& grad) const {
  const std::vector<double> x = standardize(raw);
  std::array<double, 4> d_out{};
  for (std::size_t k = 0; k < 4; ++k) d_out[k] = d_box[k] * frame_px_;
  if (hidden_ == 0) {
    for (std::size_t k = 0; k < 4; ++k) {
      for (std::size_t j = 0; j < input_dim_; ++j) grad[k * input_dim_ + j] += d_out[k] * x[j];
      grad[4 * input_dim_ + k] += d_out[k];
    }
    return;
  }
  std::array<double, 4> o{};
  std::vector<double> h;
  forward(raw, o, &h);
  const std::size_t b1 = hidden_ * input_dim_;
  const std::size_t w2 = b1 + hidden_;
  const std::size_t b2 = w2 + 4 * hidden_;
  for (std::size_t k = 0; k < 4; ++k) {
    grad[b2 + k] += d_out[k];
    for (std::size_t u = 0; u < hidden_; ++u) grad[w2 + k * hidden_ + u] += d_out[k] * h[u];
  }
  for (std::size_t u = 0; u < hidden_; ++u) {
    double dh = 0.0;
    for (std::size_t k = 0; k < 4; ++k) dh += d_out[k] * params_[w2 + k * hidden_ + u];
    const double dz = dh * (1.0 - h[u] * h[u]);
    grad[b1 + u] += dz;
    for (std::size_t j = 0; j < input_dim_; ++j) grad[u * input_dim_ + j] += dz * x[j];
  }
}

bool Regressor::finite() const {
  return std::all_of(params_.begin(), params_.end(), [](double v) { return std::isfinite(v); });
}

nlohmann::json Regressor::to_json() const {
  nlohmann::json j = {{"input_dim", input_dim_}, {"hidden_units", hidden_}, {"frame_px", frame_px_}, {"params", params_}};
  if (!input_mean_.empty()) {
    j["input_mean"] = input_mean_;
    j["input_scale"] = input_scale_;
  }
  return j;
}

Regressor Regressor::from_json(const nlohmann::json& j) {
  Regressor r(j.at("input_dim").get<std::size_t>(), j.at("hidden_units").get<std::size_t>(),
              j.at("frame_px").get<double>());
  auto p = j.at("params").get<std::vector<double>>();
  if (p.size() != r.params_.size()) throw ParseError("model parameter count does not match its shape");
  r.params_ = std::move(p);
  if (j.contains("input_mean")) {
    r.set_input_normalization(j.at("input_mean").get<std::vector<double>>(),
                              j.at("input_scale").get<std::vector<double>>());
  }
  return r;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

std::string to_string(LossMode mode) { return mode == LossMode::baseline ? "baseline" : "psych"; }

LossMode loss_mode_from_string(const std::string& s) {
  if (s == "baseline") return LossMode::baseline;
  if (s == "psych") return LossMode::psych;
  throw InvalidArgument("loss mode must be 'baseline' or 'psych', got '" + s + "'");
}

namespace {

LossValue sample_loss(const Regressor& model, const SyntheticScene& s, LossMode mode, const PsychLossParams& params) {
  const Box pred = model.predict(s.features);
  if (mode == LossMode::baseline) return default_loss_with_grad(pred, s.gt_box, params.default_loss);
  return human_loss_with_grad(LossSample{pred, s.gt_box, s.stratum, s.has_behavioral_data}, params);
}

}  // namespace

double mean_loss(const Regressor& model, std::span<const SyntheticScene> scenes, LossMode mode,
                 const PsychLossParams& params) {
  if (scenes.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& s : scenes) sum += sample_loss(model, s, mode, params).value;
  return sum / static_cast<double>(scenes.size());
}

TrainResult train(std::span<const SyntheticScene> scenes, LossMode mode, const PsychLossParams& params,
                  const ToyConfig& config, std::uint64_t seed) {
  if (scenes.empty()) throw InvalidArgument("training set is empty");
  config.validate();
  params.validate();

  TrainResult result;
  result.model = Regressor(scenes.front().features.size(), config.hidden_units, config.frame_px);
  auto& model = result.model;
  model.initialize(seed ^ 0x9E3779B97F4A7C15ULL, config.init_scale);
  {
    // Standardise inputs and start from the mean box so plain SGD is well conditioned.
    const std::size_t d = model.input_dim();
    std::vector<double> mean(d, 0.0), sd(d, 0.0);
    Box avg{0, 0, 0, 0};
    const double n = static_cast<double>(scenes.size());
    for (const auto& s : scenes) {
      for (std::size_t j = 0; j < d; ++j) mean[j] += s.features[j] / n;
      avg.x_min += s.gt_box.x_min / n;
      avg.y_min += s.gt_box.y_min / n;
      avg.width += s.gt_box.width / n;
      avg.height += s.gt_box.height / n;
    }
    for (const auto& s : scenes) {
      for (std::size_t j = 0; j < d; ++j) sd[j] += (s.features[j] - mean[j]) * (s.features[j] - mean[j]) / n;
    }
    for (auto& v : sd) v = v > 0.0 ? std::sqrt(v) : 1.0;
    model.set_input_normalization(std::move(mean), std::move(sd));
    model.set_output_bias(avg);
  }
  Rng order_rng(seed ^ 0xC2B2AE3D27D4EB4FULL);

  const auto check = [](double loss, std::size_t epoch) {
    if (!std::isfinite(loss)) throw DivergedLoss("training loss became non-finite in epoch " + std::to_string(epoch));
  };
  result.loss_curve.push_back(mean_loss(model, scenes, mode, params));
  check(result.loss_curve.back(), 0);

  std::vector<std::size_t> order(scenes.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> grad(model.params().size());

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    order_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t i = start; i < stop; ++i) {
        const auto& s = scenes[order[i]];
        const LossValue lv = sample_loss(model, s, mode, params);
        check(lv.value, epoch);
        model.accumulate_gradient(s.features, lv.grad, grad);
      }
      const double inv = 1.0 / static_cast<double>(stop - start);
      double norm2 = 0.0;
      for (auto& g : grad) {
        g *= inv;
        norm2 += g * g;
      }
      const double norm = std::sqrt(norm2);
      const double scale = norm > config.clip_norm ? config.clip_norm / norm : 1.0;
      auto& p = model.params();
      for (std::size_t k = 0; k < p.size(); ++k) p[k] -= config.learning_rate * scale * grad[k];
    }
    result.loss_curve.push_back(mean_loss(model, scenes, mode, params));
    check(result.loss_curve.back(), epoch);
  }
  return result;
}

StratifiedReport evaluate(const Regressor& model, std::span<const SyntheticScene> test_scenes) {
  if (test_scenes.empty()) throw InvalidArgument("test set is empty");
  std::vector<EvalItem> items;
  items.reserve(test_scenes.size());
  for (const auto& s : test_scenes) items.push_back({s.stratum, s.gt_box, model.predict(s.features), 1.0});
  return evaluate_predictions(items);
}

ToyRun run_toy(const ToyConfig& config, const PsychLossParams& params, LossMode mode, std::uint64_t seed) {
  ToyRun run;
  run.seed = seed;
  run.mode = mode;
  const auto data = generate_dataset(config, config.n_per_stratum, seed);
  run.training = train(data.train, mode, params, config, seed);
  run.report = evaluate(run.training.model, data.test);
  return run;
}

}  // namespace psyloc
