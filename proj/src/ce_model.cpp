#include "cograsp/ce_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include "cograsp/errors.hpp"
#include "cograsp/random.hpp"

namespace cograsp {

using nlohmann::json;
using nn::Graph;
using nn::Tensor;
using nn::Var;

void CEModelConfig::validate() const {
  if (embed_dim < 2) throw ValidationError("embed_dim must be at least 2");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ValidationError("temperature must be positive");
  if (batch_size == 0) throw ValidationError("batch_size must be positive");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ValidationError("alpha must be positive");
  if (raster_size < 8) throw ValidationError("raster_size must be at least 8");
  if (mlp_hidden == 0 || gru_hidden == 0) throw ValidationError("hidden sizes must be positive");
  if (conv_channels.empty() || std::ranges::find(conv_channels, 0u) != conv_channels.end()) {
    throw ValidationError("conv_channels must be a nonempty list of positive counts");
  }
  optimizer.validate();
}

json config_to_json(const CEModelConfig& cfg) {
  return {{"embed_dim", cfg.embed_dim},
          {"temperature", cfg.temperature},
          {"batch_size", cfg.batch_size},
          {"epochs", cfg.epochs},
          {"alpha", cfg.alpha},
          {"learning_rate", cfg.optimizer.learning_rate},
          {"weight_decay", cfg.optimizer.weight_decay},
          {"beta1", cfg.optimizer.beta1},
          {"beta2", cfg.optimizer.beta2},
          {"epsilon", cfg.optimizer.epsilon},
          {"schedule_factor", cfg.optimizer.schedule_factor},
          {"schedule_patience", cfg.optimizer.schedule_patience},
          {"raster_size", cfg.raster_size},
          {"mlp_hidden", cfg.mlp_hidden},
          {"gru_hidden", cfg.gru_hidden},
          {"conv_channels", cfg.conv_channels}};
}

namespace {

std::size_t count_value(const json& v, const std::string& key) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    throw ValidationError("'" + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

double real_value(const json& v, const std::string& key) {
  if (!v.is_number()) throw ValidationError("'" + key + "' must be a number");
  return v.get<double>();
}

}  // namespace

CEModelConfig config_from_json(const json& j, const CEModelConfig& base) {
  if (!j.is_object()) throw ValidationError("model config must be a JSON object");
  CEModelConfig cfg = base;
  for (const auto& [key, v] : j.items()) {
    if (key == "embed_dim") cfg.embed_dim = count_value(v, key);
    else if (key == "temperature") cfg.temperature = real_value(v, key);
    else if (key == "batch_size") cfg.batch_size = count_value(v, key);
    else if (key == "epochs") cfg.epochs = count_value(v, key);
    else if (key == "alpha") cfg.alpha = real_value(v, key);
    else if (key == "learning_rate") cfg.optimizer.learning_rate = real_value(v, key);
    else if (key == "weight_decay") cfg.optimizer.weight_decay = real_value(v, key);
    else if (key == "beta1") cfg.optimizer.beta1 = real_value(v, key);
    else if (key == "beta2") cfg.optimizer.beta2 = real_value(v, key);
    else if (key == "epsilon") cfg.optimizer.epsilon = real_value(v, key);
    else if (key == "schedule_factor") cfg.optimizer.schedule_factor = real_value(v, key);
    else if (key == "schedule_patience") cfg.optimizer.schedule_patience = count_value(v, key);
    else if (key == "raster_size") cfg.raster_size = count_value(v, key);
    else if (key == "mlp_hidden") cfg.mlp_hidden = count_value(v, key);
    else if (key == "gru_hidden") cfg.gru_hidden = count_value(v, key);
    else if (key == "conv_channels") {
      if (!v.is_array()) throw ValidationError("'conv_channels' must be an array");
      cfg.conv_channels.clear();
      for (const auto& c : v) cfg.conv_channels.push_back(count_value(c, key));
    } else {
      throw ValidationError("unknown model config key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

namespace {

Vec2 scaled(const Vec2& p, const OccupancyMap& map) {
  return {(p.x - map.origin().x) / map.width_m(), (p.y - map.origin().y) / map.height_m()};
}

}  // namespace

Tensor grasp_feature(const GraspConfiguration& g, const OccupancyMap& map) {
  const Vec2 b = scaled(g.base, map);
  const Vec2 q = scaled(g.grasp, map);
  return Tensor({1, 4}, {b.x, b.y, q.x, q.y});
}

ScenarioFeatures scenario_features(const Scenario& scenario, std::size_t raster_size) {
  if (scenario.grasp_set.empty()) throw EmptyGraspSet();
  ScenarioFeatures f;
  const auto verts = posed_vertices(scenario.object, scenario.start_pose);
  f.vertices = Tensor({verts.size(), 2});
  for (std::size_t i = 0; i < verts.size(); ++i) {
    const Vec2 p = scaled(verts[i], scenario.map);
    f.vertices.at(i, 0) = p.x;
    f.vertices.at(i, 1) = p.y;
  }
  const std::size_t m = scenario.grasp_set.size();
  f.grasps = Tensor({m, 4});
  for (std::size_t i = 0; i < m; ++i) {
    const Tensor row = grasp_feature(scenario.grasp_set[i], scenario.map);
    std::copy(row.values.begin(), row.values.end(), f.grasps.values.begin() + static_cast<std::ptrdiff_t>(4 * i));
  }
  RasterGrid raster = rasterize_scene(scenario.map, &scenario.object, scenario.start_pose, raster_size);
  f.raster = Tensor({1, raster_size, raster_size}, std::move(raster.values));
  return f;
}

CEModel::Encoders CEModel::make_encoders(nn::ParameterStore& store, const std::string& prefix,
                                         const CEModelConfig& cfg, Rng& rng) {
  const std::size_t h = cfg.mlp_hidden;
  std::vector<std::size_t> channels{1};
  channels.insert(channels.end(), cfg.conv_channels.begin(), cfg.conv_channels.end());
  Encoders e;
  e.vertex_head = nn::Mlp::create(store, prefix + ".vertex_head", {2, h, h}, rng);
  e.vertex_gru = nn::BiGruLayer::create(store, prefix + ".vertex_gru", h, cfg.gru_hidden, rng);
  e.grasp_head = nn::Mlp::create(store, prefix + ".grasp_head", {4, h, h}, rng);
  e.grasp_gru = nn::BiGruLayer::create(store, prefix + ".grasp_gru", h, cfg.gru_hidden, rng);
  e.map_encoder = nn::ConvEncoder::create(store, prefix + ".map", channels, rng);
  return e;
}

CEModel::CEModel(const CEModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const std::size_t h = cfg_.mlp_hidden;
  const std::size_t pooled_width = 4 * cfg_.gru_hidden + cfg_.conv_channels.back();

  center_enc_ = make_encoders(center_store_, "center", cfg_, rng);
  center_head_ = nn::Mlp::create(center_store_, "center.element_head", {4, h, h}, rng);
  center_out_ = nn::Mlp::create(center_store_, "center.out", {h + pooled_width, h, cfg_.embed_dim}, rng);

  context_enc_ = make_encoders(context_store_, "context", cfg_, rng);
  context_head_ = nn::Mlp::create(context_store_, "context.element_head", {4, h, h}, rng);
  context_gru_ = nn::BiGruLayer::create(context_store_, "context.sequence_gru", h + pooled_width, cfg_.gru_hidden, rng);
  context_out_ = nn::Mlp::create(context_store_, "context.out", {2 * cfg_.gru_hidden, h, cfg_.embed_dim}, rng);
}

bool CEModel::same_parameters(const CEModel& other) const {
  return center_store_.same_values(other.center_store_) && context_store_.same_values(other.context_store_);
}

Var CEModel::pooled(Graph& g, nn::ParameterStore& store, const Encoders& enc, const ScenarioFeatures& features) {
  const Var verts = g.constant(features.vertices);
  const Var v = nn::mean_rows(enc.vertex_gru(g, store, enc.vertex_head(g, store, verts)));
  const Var grasps = g.constant(features.grasps);
  const Var q = nn::mean_rows(enc.grasp_gru(g, store, enc.grasp_head(g, store, grasps)));
  const Var map = enc.map_encoder(g, store, g.constant(features.raster));
  const std::array parts{v, q, map};
  return nn::concat_cols(parts);
}

Var CEModel::center_tower(Graph& g, const ScenarioFeatures& features, const Tensor& centers) {
  const Var scene = pooled(g, center_store_, center_enc_, features);
  const Var heads = center_head_(g, center_store_, g.constant(centers));
  const std::array parts{heads, nn::repeat_rows(scene, centers.rows())};
  return nn::l2_normalize_rows(center_out_(g, center_store_, nn::concat_cols(parts)));
}

Var CEModel::context_tower(Graph& g, const ScenarioFeatures& features, const Tensor& elements) {
  const Var scene = pooled(g, context_store_, context_enc_, features);
  const Var heads = context_head_(g, context_store_, g.constant(elements));
  const std::array parts{heads, nn::repeat_rows(scene, elements.rows())};
  const Var seq = context_gru_(g, context_store_, nn::concat_cols(parts));
  return nn::l2_normalize_rows(context_out_(g, context_store_, seq));
}

std::vector<double> CEModel::encode_center(const GraspConfiguration& center, const Scenario& scenario) {
  const ScenarioFeatures f = scenario_features(scenario, cfg_.raster_size);
  Graph g;
  return center_tower(g, f, grasp_feature(center, scenario.map)).value().values;
}

Tensor CEModel::encode_context_set(std::span<const GraspConfiguration> subset, const Scenario& scenario) {
  if (subset.empty()) throw ValidationError("context subset must be nonempty");
  const ScenarioFeatures f = scenario_features(scenario, cfg_.raster_size);
  Tensor elements({subset.size(), 4});
  for (std::size_t i = 0; i < subset.size(); ++i) {
    const Tensor row = grasp_feature(subset[i], scenario.map);
    std::copy(row.values.begin(), row.values.end(), elements.values.begin() + static_cast<std::ptrdiff_t>(4 * i));
  }
  Graph g;
  return context_tower(g, f, elements).value();
}

CEModel::Embeddings CEModel::embed_scenario(const Scenario& scenario) {
  return embed_scenario(scenario_features(scenario, cfg_.raster_size));
}

CEModel::Embeddings CEModel::embed_scenario(const ScenarioFeatures& features) {
  Graph g;
  Embeddings e;
  e.center = center_tower(g, features, features.grasps).value();
  e.context = context_tower(g, features, features.grasps).value();
  return e;
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeMismatch("embedding lengths differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

std::vector<double> conditional_probability(std::span<const double> e_center, const Tensor& e_context) {
  const std::size_t m = e_context.rows();
  const std::size_t d = e_context.cols();
  if (d != e_center.size()) throw ShapeMismatch("embedding lengths differ");
  std::vector<double> p(m);
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < m; ++j) {
    p[j] = dot(e_center, std::span(e_context.values).subspan(j * d, d));
    top = std::max(top, p[j]);
  }
  double total = 0.0;
  for (double& v : p) {
    v = std::exp(v - top);
    total += v;
  }
  for (double& v : p) v /= total;
  return p;
}

double pair_probability(double dot_value, double temperature) {
  const double z = dot_value / temperature;
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double pair_probability(std::span<const double> e_center, std::span<const double> e_context, double temperature) {
  return pair_probability(dot(e_center, e_context), temperature);
}

Var embedding_loss(Var e_centers, Var e_context, std::span<const CenterSample> samples, double temperature) {
  Graph& g = *e_centers.graph;
  std::vector<Var> terms;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const CenterSample& s = samples[i];
    if (s.positives.empty()) continue;
    std::vector<std::size_t> idx = s.positives;
    idx.insert(idx.end(), s.negatives.begin(), s.negatives.end());
    const std::size_t k = idx.size();
    // log p = -softplus(-z) and log(1 - p) = -softplus(z).
    Tensor sign({k, 1}, 1.0);
    Tensor weight({k, 1}, 1.0);
    const double neg_weight =
        s.negatives.empty() ? 0.0 : static_cast<double>(s.positives.size()) / static_cast<double>(s.negatives.size());
    for (std::size_t r = 0; r < k; ++r) {
      if (r < s.positives.size()) {
        sign[r] = -1.0;
      } else {
        weight[r] = neg_weight;
      }
    }
    const Var rows = nn::gather_rows(e_context, idx);
    const Var z = nn::affine(nn::matmul(rows, nn::transpose(nn::row(e_centers, i))), 1.0 / temperature);
    const Var nll = nn::softplus(nn::mul(z, g.constant(std::move(sign))));
    terms.push_back(nn::sum(nn::mul(nll, g.constant(std::move(weight)))));
  }
  if (terms.empty()) return g.constant(Tensor({1, 1}, 0.0));
  return nn::sum(nn::stack_rows(terms));
}

namespace {

/// Sample indices of `batch` grouped by scenario, in ascending scenario order.
std::map<std::size_t, std::vector<std::size_t>> by_scenario(std::span<const ScenarioSample> batch) {
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < batch.size(); ++i) groups[batch[i].scenario].push_back(i);
  return groups;
}

}  // namespace

Var training_loss(Graph& g, CEModel& model, std::span<const ScenarioFeatures> features,
                  std::span<const ScenarioSample> batch) {
  std::vector<Var> parts;
  std::size_t counted = 0;
  for (const auto& [s, members] : by_scenario(batch)) {
    const ScenarioFeatures& f = features[s];
    Tensor centers({members.size(), 4});
    std::vector<CenterSample> samples;
    for (std::size_t r = 0; r < members.size(); ++r) {
      const CenterSample& cs = batch[members[r]].sample;
      for (std::size_t c = 0; c < 4; ++c) centers.at(r, c) = f.grasps.at(cs.center, c);
      samples.push_back(cs);
      if (!cs.positives.empty()) ++counted;
    }
    const Var ec = model.center_tower(g, f, centers);
    const Var ex = model.context_tower(g, f, f.grasps);
    parts.push_back(embedding_loss(ec, ex, samples, model.config().temperature));
  }
  if (counted == 0) return g.constant(Tensor({1, 1}, 0.0));
  return nn::affine(nn::sum(nn::stack_rows(parts)), 1.0 / static_cast<double>(counted));
}

std::vector<ScenarioSample> draw_samples(const Dataset& ds, std::span<const std::size_t> scenarios, double alpha,
                                         std::uint64_t seed) {
  std::vector<ScenarioSample> out;
  for (std::size_t s : scenarios) {
    const LabeledScenario& ls = ds.scenarios.at(s);
    if (ls.size() < 2) continue;
    const NegativeSampleSpec spec{alpha, mix_seed(seed, s)};
    for (std::size_t c = 0; c < ls.size(); ++c) {
      if (ls.dc_sets[c].empty()) continue;
      out.push_back({s, {c, ls.dc_sets[c], negative_sample(ls, c, spec)}});
    }
  }
  return out;
}

double evaluate_loss(CEModel& model, const Dataset& ds, std::span<const ScenarioFeatures> features, Split split,
                     std::uint64_t seed) {
  const auto idx = ds.indices(split);
  const auto samples = draw_samples(ds, idx, model.config().alpha, seed);
  if (samples.empty()) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  const auto groups = by_scenario(samples);
  for (const auto& [s, members] : groups) {
    std::vector<ScenarioSample> part;
    for (std::size_t i : members) part.push_back(samples[i]);
    Graph g;
    total += training_loss(g, model, features, part).value()[0] * static_cast<double>(part.size());
  }
  return total / static_cast<double>(samples.size());
}

TrainResult train(const Dataset& ds, const CEModelConfig& cfg, std::uint64_t seed,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  cfg.validate();
  if (ds.split.size() != ds.scenarios.size()) throw ValidationError("dataset split does not match scenario count");
  const auto train_idx = ds.indices(Split::Train);
  if (train_idx.empty()) throw ValidationError("train split is empty");

  TrainResult result{CEModel(cfg, mix_seed(seed, 1)), {}};
  CEModel& model = result.model;
  if (cfg.epochs == 0) return result;

  std::vector<ScenarioFeatures> features;
  features.reserve(ds.scenarios.size());
  for (const auto& ls : ds.scenarios) features.push_back(scenario_features(ls.scenario, cfg.raster_size));
  const bool has_val = !ds.indices(Split::Val).empty();

  nn::PlateauScheduler scheduler(cfg.optimizer.learning_rate, cfg.optimizer.schedule_factor,
                                 cfg.optimizer.schedule_patience);
  double lr = cfg.optimizer.learning_rate;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(mix_seed(seed, 2, epoch));
    std::vector<std::size_t> order = train_idx;
    rng.shuffle(order);
    std::vector<ScenarioSample> samples;
    for (std::size_t s : order) {
      const std::array one{s};
      auto part = draw_samples(ds, one, cfg.alpha, mix_seed(seed, 3, epoch));
      rng.shuffle(part);
      samples.insert(samples.end(), part.begin(), part.end());
    }

    double total = 0.0;
    for (std::size_t begin = 0; begin < samples.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(samples.size(), begin + cfg.batch_size);
      const std::span batch(samples.data() + begin, end - begin);
      model.center_params().zero_grad();
      model.context_params().zero_grad();
      Graph g;
      const Var loss = training_loss(g, model, features, batch);
      total += loss.value()[0] * static_cast<double>(batch.size());
      g.backward(loss);
      nn::adamw_step(model.center_params(), cfg.optimizer, lr);
      nn::adamw_step(model.context_params(), cfg.optimizer, lr);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = samples.empty() ? 0.0 : total / static_cast<double>(samples.size());
    rec.val_loss = has_val ? evaluate_loss(model, ds, features, Split::Val, mix_seed(seed, 4))
                           : std::numeric_limits<double>::quiet_NaN();
    rec.learning_rate = lr;
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    lr = scheduler.step(std::isnan(rec.val_loss) ? rec.train_loss : rec.val_loss);
  }
  return result;
}

void save_model(const CEModel& model, const std::filesystem::path& path) {
  const json j{{"format", "cograsp-model"},
               {"version", kModelFormatVersion},
               {"config", config_to_json(model.config())},
               {"center", nn::weights_to_json(model.center_params())},
               {"context", nn::weights_to_json(model.context_params())}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump() << "\n";
  if (!out) throw Error("failed writing " + path.string());
}

CEModel load_model(const std::filesystem::path& path, std::optional<std::size_t> expected_embed_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw CorruptFile(path.string() + ": " + e.what());
  }
  if (!j.is_object() || j.value("format", std::string{}) != "cograsp-model") {
    throw CorruptFile(path.string() + ": not a model file");
  }
  if (!j.contains("version") || j["version"] != kModelFormatVersion) {
    throw FormatVersionMismatch(path.string() + ": unsupported model version");
  }
  for (const char* key : {"config", "center", "context"}) {
    if (!j.contains(key)) throw CorruptFile(path.string() + ": missing '" + key + "'");
  }
  CEModelConfig cfg;
  try {
    cfg = config_from_json(j["config"]);
  } catch (const ValidationError& e) {
    throw CorruptFile(path.string() + ": " + e.what());
  }
  if (expected_embed_dim && *expected_embed_dim != cfg.embed_dim) {
    throw ShapeMismatch("model embed_dim " + std::to_string(cfg.embed_dim) + " differs from expected " +
                        std::to_string(*expected_embed_dim));
  }
  CEModel model(cfg, 0);
  nn::weights_from_json(model.center_params(), j["center"]);
  nn::weights_from_json(model.context_params(), j["context"]);
  return model;
}

}  // namespace cograsp
