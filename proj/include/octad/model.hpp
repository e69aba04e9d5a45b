#pragma once

#include "octad/augment.hpp"
#include "octad/config.hpp"
#include "octad/nn.hpp"
#include "octad/preprocess.hpp"

namespace octad::model {

// One evaluation-ready scan: composite channels plus the metadata the loss
// and the reports need.
struct Sample {
  preprocess::Composite comp;
  int label = 0;  // AD = 1
  std::optional<double> years;
  std::string subject_id;
  Eye eye = Eye::L;
  int instance = 0;
};

struct TrainSettings {
  RunConfig cfg;
  augment::Ranges aug;
  NetShape shape;
  double weight_decay = 0.01;
};

// Mutable state of one training run. After any epoch at or past the
// averaging start, swa.count == epoch - swa_start_epoch + 1.
struct TrainState {
  ParamSet<float> params;
  AdamW<float> opt;
  SwaAccumulator<float> swa;
  int epoch = 0;  // 1-based count of completed epochs
};

// Full training loop: per-epoch shuffle, one augmentation per sample,
// year-weighted cross-entropy, AdamW, stochastic weight averaging from
// cfg.swa_start_epoch (1-based) to the last epoch. Deterministic given the
// seed. Returns the SWA-averaged parameters.
ParamSet<float> train_classifier(const std::vector<const Sample*>& data,
                                 const TrainSettings& settings, uint64_t seed);

// Evaluation-mode probability of class AD (softmax component 1).
double predict_score(const ParamSet<float>& p, const preprocess::Composite& comp);

// Composite -> network input (channels x h*w).
Mx<float> composite_input(const preprocess::Composite& comp);

// Parameter bundle on disk: index.txt with "name path dims..." lines plus
// one tensor file per named tensor.
void save_params(const std::string& dir, const ParamSet<float>& p);
ParamSet<float> load_params(const std::string& dir);

}  // namespace octad::model
