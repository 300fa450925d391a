#pragma once

// Dataset -> trained model pipelines shared by the CLI and the daemon's
// retrain endpoint.

#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gestop/datasets.hpp"
#include "gestop/error.hpp"
#include "gestop/neuralnet.hpp"

namespace gestop {

struct StaticTrainingResult {
  nn::StaticNet model;
  std::vector<nn::EpochMetrics> history;
  ConfusionMatrix validation;             // plain argmax
  ConfusionMatrix validation_calibrated;  // with the none-class boost
};

struct DynamicTrainingResult {
  nn::DynamicNet model;
  std::vector<nn::EpochMetrics> history;
  ConfusionMatrix validation;
};

using EpochCallback = std::function<void(const nn::EpochMetrics&)>;

inline StaticTrainingResult train_static(const StaticDataset& data, const nn::TrainConfig& cfg,
                                         double val_fraction = kDefaultValFraction,
                                         double calibration_k = 2.0,
                                         const EpochCallback& on_epoch = {}) {
  auto classes = class_labels(data, /*with_none=*/true);
  auto [train_set, val_set] = split(data, val_fraction);

  const auto train_x = static_inputs(train_set);
  const auto train_y = label_indices(labels_of(train_set), classes);
  const auto val_x = static_inputs(val_set);
  const auto val_y = label_indices(labels_of(val_set), classes);

  auto net = nn::make_static_net(classes, cfg.seed);
  auto trained = nn::train(std::move(net), nn::LabeledSet<nn::Vector>{train_x, train_y}, cfg,
                           std::optional{nn::LabeledSet<nn::Vector>{val_x, val_y}}, on_epoch);
  const auto cal = nn::calibration_for(trained.model.labels, calibration_k);
  auto plain = evaluate(trained.model, val_set);
  auto calibrated = evaluate(trained.model, val_set, cal);
  return {std::move(trained.model), std::move(trained.history), std::move(plain), std::move(calibrated)};
}

inline DynamicTrainingResult train_dynamic(const DynamicDataset& data, const nn::TrainConfig& cfg,
                                           double val_fraction = kDefaultValFraction,
                                           const EpochCallback& on_epoch = {}) {
  auto classes = class_labels(data, /*with_none=*/false);
  auto [train_set, val_set] = split(data, val_fraction);

  const auto train_x = dynamic_inputs(train_set);
  const auto train_y = label_indices(labels_of(train_set), classes);
  const auto val_x = dynamic_inputs(val_set);
  const auto val_y = label_indices(labels_of(val_set), classes);

  auto net = nn::make_dynamic_net(classes, cfg.seed);
  auto trained = nn::train(std::move(net), nn::LabeledSet<nn::Matrix>{train_x, train_y}, cfg,
                           std::optional{nn::LabeledSet<nn::Matrix>{val_x, val_y}}, on_epoch);
  auto plain = evaluate(trained.model, val_set);
  return {std::move(trained.model), std::move(trained.history), std::move(plain)};
}

/// CSV with header "epoch,loss,val_accuracy".
inline void write_metrics_csv(const std::vector<nn::EpochMetrics>& history,
                              const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IOFailure, "cannot write " + path.string());
  out << "epoch,loss,val_accuracy\n";
  for (const auto& m : history) {
    std::string line = std::to_string(m.epoch) + ",";
    detail::append_double(line, m.loss);
    line += ",";
    if (m.val_accuracy) detail::append_double(line, *m.val_accuracy);
    out << line << '\n';
  }
}

}  // namespace gestop
