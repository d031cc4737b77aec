#pragma once

// JSON rendering of training results. Requires nlohmann/json ("json.hpp").

#include <json.hpp>

#include "voxgraph/training.hpp"

namespace voxgraph::train {

inline nlohmann::json to_json(const ModelSpec& s) {
  return {{"arch", std::string(gnn::to_string(s.arch))},
          {"hidden_units", s.hidden_units},
          {"num_mp_layers", s.num_mp_layers},
          {"gat_heads", s.gat_heads},
          {"weighted_messages", s.weighted_messages}};
}

inline nlohmann::json to_json(const std::vector<EpochRecord>& curve) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : curve) out.push_back({{"train_loss", e.train_loss}, {"val_accuracy", e.val_accuracy}});
  return out;
}

inline nlohmann::json to_json(const TestEvaluation& ev) {
  nlohmann::json j = {{"accuracy", ev.accuracy},   {"f1", ev.f1},           {"indices", ev.indices},
                      {"scores", ev.scores},       {"predictions", ev.predictions}, {"labels", ev.labels}};
  j["auroc"] = ev.auroc ? nlohmann::json(*ev.auroc) : nlohmann::json(nullptr);
  return j;
}

template <typename R>
nlohmann::json to_json(const ExperimentResult<R>& r) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : r.cells) {
    nlohmann::json j = {{"learning_rate", c.learning_rate},
                        {"batch_size", c.batch_size},
                        {"hidden_units", c.hidden_units},
                        {"failed", c.failed},
                        {"seconds", c.seconds}};
    if (c.failed) {
      j["error"] = c.error;
    } else {
      j["val_accuracy"] = c.val_accuracy;
      j["val_f1"] = c.val_f1;
      j["val_auroc"] = c.val_auroc;
      j["best_epoch"] = c.best_epoch;
      j["curve"] = to_json(c.curve);
    }
    cells.push_back(std::move(j));
  }
  return {{"model", to_json(r.base_spec)},
          {"grid",
           {{"learning_rates", r.grid.learning_rates},
            {"batch_sizes", r.grid.batch_sizes},
            {"hidden_units", r.grid.hidden_units},
            {"epochs", r.grid.epochs}}},
          {"seed", r.seed},
          {"split", {{"train", r.split.train}, {"val", r.split.val}, {"test", r.split.test}}},
          {"cells", std::move(cells)},
          {"chosen_cell", r.chosen},
          {"chosen_model", to_json(r.chosen_spec)},
          {"test", to_json(r.test)},
          {"wall_seconds", r.wall_seconds}};
}

}  // namespace voxgraph::train
