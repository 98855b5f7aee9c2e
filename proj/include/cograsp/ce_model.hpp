#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "cograsp/feasibility_dataset.hpp"
#include "cograsp/nn_core.hpp"
#include "cograsp/scenario.hpp"

namespace cograsp {

struct CEModelConfig {
  std::size_t embed_dim = 44;
  double temperature = 6.15e-2;
  std::size_t batch_size = 37;
  std::size_t epochs = 83;
  double alpha = 1.10;
  nn::OptimizerConfig optimizer;
  std::size_t raster_size = 64;
  std::size_t mlp_hidden = 64;
  std::size_t gru_hidden = 32;
  std::vector<std::size_t> conv_channels = {8, 16, 32};

  void validate() const;
  bool operator==(const CEModelConfig&) const = default;
};

/// Unknown keys throw ValidationError; absent keys keep their defaults.
nlohmann::json config_to_json(const CEModelConfig& cfg);
CEModelConfig config_from_json(const nlohmann::json& j, const CEModelConfig& base = {});

/// Parameter-independent inputs of one scenario: object vertices at the
/// start pose, grasp configurations (base, grasp), and the scene raster.
/// Coordinates are scaled into [0, 1] by the map extent.
struct ScenarioFeatures {
  nn::Tensor vertices;  // [n_v, 2], in the stored polygon order
  nn::Tensor grasps;    // [m, 4], in grasp-set order
  nn::Tensor raster;    // [1, s, s]
};

ScenarioFeatures scenario_features(const Scenario& scenario, std::size_t raster_size);
/// One configuration as a [1, 4] row, scaled like ScenarioFeatures::grasps.
nn::Tensor grasp_feature(const GraspConfiguration& g, const OccupancyMap& map);

/// Center and context towers. The towers share no parameters.
class CEModel {
 public:
  CEModel(const CEModelConfig& cfg, std::uint64_t seed);

  const CEModelConfig& config() const { return cfg_; }
  nn::ParameterStore& center_params() { return center_store_; }
  nn::ParameterStore& context_params() { return context_store_; }
  const nn::ParameterStore& center_params() const { return center_store_; }
  const nn::ParameterStore& context_params() const { return context_store_; }
  bool same_parameters(const CEModel& other) const;

  /// Graph-level towers over [k, 4] configuration rows; outputs [k, d] unit
  /// rows. For the context tower the rows form one sequence, in order.
  nn::Var center_tower(nn::Graph& g, const ScenarioFeatures& features, const nn::Tensor& centers);
  nn::Var context_tower(nn::Graph& g, const ScenarioFeatures& features, const nn::Tensor& elements);

  /// Unit vector of length d.
  std::vector<double> encode_center(const GraspConfiguration& center, const Scenario& scenario);
  /// One unit row per element of `subset`, in input order.
  nn::Tensor encode_context_set(std::span<const GraspConfiguration> subset, const Scenario& scenario);

  /// Rows for every configuration of the scenario; contexts use the full set.
  struct Embeddings {
    nn::Tensor center;   // [m, d]
    nn::Tensor context;  // [m, d]
  };
  Embeddings embed_scenario(const Scenario& scenario);
  Embeddings embed_scenario(const ScenarioFeatures& features);

 private:
  struct Encoders {
    nn::Mlp vertex_head;
    nn::BiGruLayer vertex_gru;
    nn::Mlp grasp_head;
    nn::BiGruLayer grasp_gru;
    nn::ConvEncoder map_encoder;
  };
  static Encoders make_encoders(nn::ParameterStore& store, const std::string& prefix, const CEModelConfig& cfg,
                                Rng& rng);
  /// [1, 2H + 2H + conv] pooled scenario features.
  nn::Var pooled(nn::Graph& g, nn::ParameterStore& store, const Encoders& enc, const ScenarioFeatures& features);

  CEModelConfig cfg_;
  nn::ParameterStore center_store_;
  nn::ParameterStore context_store_;
  Encoders center_enc_;
  nn::Mlp center_head_;
  nn::Mlp center_out_;
  Encoders context_enc_;
  nn::Mlp context_head_;
  nn::BiGruLayer context_gru_;
  nn::Mlp context_out_;
};

/// Softmax over e_context^j . e_center.
std::vector<double> conditional_probability(std::span<const double> e_center, const nn::Tensor& e_context);
/// sigmoid(dot / tau).
double pair_probability(std::span<const double> e_center, std::span<const double> e_context, double temperature);
double pair_probability(double dot, double temperature);

/// One center with its feasible contexts and drawn negatives.
struct CenterSample {
  std::size_t center = 0;
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;
};

/// Sum over samples of
///   -[sum_DC log p + (|DC| / |N|) sum_N log(1 - p)],  p = sigmoid(dot / tau).
/// Row i of `e_centers` belongs to samples[i]; `e_context` has one row per
/// configuration. Samples with empty positives add nothing.
nn::Var embedding_loss(nn::Var e_centers, nn::Var e_context, std::span<const CenterSample> samples,
                       double temperature);

/// A training sample tied to its scenario.
struct ScenarioSample {
  std::size_t scenario = 0;
  CenterSample sample;
};

/// Mean per-center loss over `batch`; embeddings are computed once per
/// scenario present in the batch. `features[s]` belongs to scenario s.
nn::Var training_loss(nn::Graph& g, CEModel& model, std::span<const ScenarioFeatures> features,
                      std::span<const ScenarioSample> batch);

/// Samples with nonempty DC for every center of the listed scenarios;
/// negatives come from negative_sample with seed mix_seed(seed, scenario).
std::vector<ScenarioSample> draw_samples(const Dataset& ds, std::span<const std::size_t> scenarios, double alpha,
                                         std::uint64_t seed);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;  // NaN without a validation split
  double learning_rate = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

struct TrainResult {
  CEModel model;
  std::vector<EpochRecord> history;
};

/// Minibatches of cfg.batch_size samples. Each epoch shuffles scenario order,
/// redraws negatives, and feeds every scenario's samples contiguously so
/// batches touch few scenarios. The plateau scheduler watches the validation
/// loss (fixed negatives), or the train loss when there is no validation split.
TrainResult train(const Dataset& ds, const CEModelConfig& cfg, std::uint64_t seed,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

/// Mean per-center loss over the split with negatives fixed by `seed`.
double evaluate_loss(CEModel& model, const Dataset& ds, std::span<const ScenarioFeatures> features, Split split,
                     std::uint64_t seed);

inline constexpr int kModelFormatVersion = 1;

void save_model(const CEModel& model, const std::filesystem::path& path);
/// Throws FormatVersionMismatch, CorruptFile, or ShapeMismatch (including
/// when `expected_embed_dim` differs from the stored d).
CEModel load_model(const std::filesystem::path& path, std::optional<std::size_t> expected_embed_dim = std::nullopt);

}  // namespace cograsp
