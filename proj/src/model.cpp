#include "octad/model.hpp"

#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "octad/tensor_io.hpp"

namespace octad::model {

Mx<float> composite_input(const preprocess::Composite& comp) {
  const int h = comp.height(), w = comp.width();
  Mx<float> img(3, static_cast<long>(h) * w);
  for (int k = 0; k < 3; ++k)
    img.row(k) = Eigen::Map<const Eigen::VectorXf>(comp.ch[k].data(), comp.ch[k].size());
  return img;
}

ParamSet<float> train_classifier(const std::vector<const Sample*>& data,
                                 const TrainSettings& settings, uint64_t seed) {
  const RunConfig& cfg = settings.cfg;
  cfg.validate();
  if (data.empty()) throw Error(Errc::invalid_argument, "empty training set");
  bool has[2] = {false, false};
  for (const Sample* s : data) has[s->label != 0] = true;
  if (!has[0] || !has[1])
    throw Error(Errc::single_class, "training set must contain both classes");

  Rng init_rng = Rng::derive(seed, seed_tag::init);
  Rng loop_rng = Rng::derive(seed, seed_tag::train);

  TrainState state;
  state.params = init_params<float>(settings.shape, init_rng);
  state.opt.lr = cfg.learning_rate;
  state.opt.weight_decay = settings.weight_decay;
  state.opt.init(state.params);

  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<ForwardCache<float>> caches(cfg.batch_size);
  std::vector<Vec<float>> logits;
  std::vector<int> labels;
  std::vector<float> weights;
  ParamSet<float> grads = ParamSet<float>::zeros_like(settings.shape);

  for (state.epoch = 1; state.epoch <= cfg.epochs; ++state.epoch) {
    loop_rng.shuffle(order);
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const size_t stop = std::min(order.size(), start + cfg.batch_size);
      const int bs = static_cast<int>(stop - start);
      logits.clear();
      labels.clear();
      weights.clear();
      for (int i = 0; i < bs; ++i) {
        const Sample& s = *data[order[start + i]];
        const preprocess::Composite* comp = &s.comp;
        preprocess::Composite augmented;
        if (cfg.augmentation_enabled) {
          augment::AugmentOp op = augment::sample_op(settings.aug, loop_rng);
          augmented = augment::apply(op, s.comp, loop_rng);
          comp = &augmented;
        }
        logits.push_back(forward(state.params, composite_input(*comp), comp->height(),
                                 comp->width(), /*train_mode=*/true, &loop_rng, caches[i]));
        labels.push_back(s.label);
        weights.push_back(static_cast<float>(year_weight(s.years, cfg.year_cap)));
      }
      BatchLoss<float> bl = weighted_ce(logits, labels, weights);
      for (Arr<float>& g : grads.t) g.setZero();
      for (int i = 0; i < bs; ++i) backward(state.params, caches[i], bl.dlogits[i], grads);
      state.opt.update(state.params, grads);
    }
    if (state.epoch >= cfg.swa_start_epoch) state.swa.update(state.params);
  }
  return state.swa.finalize();
}

double predict_score(const ParamSet<float>& p, const preprocess::Composite& comp) {
  ForwardCache<float> cache;
  Vec<float> z = forward(p, composite_input(comp), comp.height(), comp.width(),
                         /*train_mode=*/false, nullptr, cache);
  return static_cast<double>(softmax(z)(1));
}

void save_params(const std::string& dir, const ParamSet<float>& p) {
  std::filesystem::create_directories(dir);
  std::ofstream index(dir + "/index.txt", std::ios::trunc);
  if (!index) throw Error(Errc::io_failure, "cannot write " + dir + "/index.txt");
  for (int i = 0; i < p.shape.n_tensors(); ++i) {
    const std::string name = p.shape.tensor_name(i);
    std::string fname = name + ".oct1";
    for (char& ch : fname)
      if (ch == '/') ch = '_';
    TensorFile t;
    t.dtype = Dtype::f32;
    for (int d : p.shape.tensor_dims(i)) t.dims.push_back(static_cast<uint32_t>(d));
    t.f32.assign(p.t[i].data(), p.t[i].data() + p.t[i].size());
    write_tensor(dir + "/" + fname, t);
    index << name << ' ' << fname;
    for (int d : p.shape.tensor_dims(i)) index << ' ' << d;
    index << '\n';
  }
}

ParamSet<float> load_params(const std::string& dir) {
  std::ifstream index(dir + "/index.txt");
  if (!index) throw Error(Errc::io_failure, "cannot open " + dir + "/index.txt");

  struct Entry {
    std::string name, path;
    std::vector<int> dims;
  };
  std::vector<Entry> entries;
  std::string line;
  while (std::getline(index, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    Entry e;
    ls >> e.name >> e.path;
    int d;
    while (ls >> d) e.dims.push_back(d);
    if (e.name.empty() || e.path.empty() || e.dims.empty())
      throw Error(Errc::bad_field, "bad index line: '" + line + "'");
    entries.push_back(std::move(e));
  }

  // Reconstruct the architecture from the conv weight shapes.
  NetShape shape;
  shape.widths.clear();
  for (const Entry& e : entries) {
    if (e.name.rfind("conv", 0) == 0 && e.name.find(".weight") != std::string::npos) {
      if (e.dims.size() != 4) throw Error(Errc::bad_field, "conv weight must be 4-d");
      if (shape.widths.empty()) shape.in_channels = e.dims[1];
      shape.widths.push_back(e.dims[0]);
    }
    if (e.name == "head.fc1.weight") shape.head_dim = e.dims[0];
    if (e.name == "head.fc2.weight") shape.n_classes = e.dims[0];
  }
  if (shape.widths.empty()) throw Error(Errc::bad_field, "no conv tensors in bundle");

  ParamSet<float> p = ParamSet<float>::zeros_like(shape);
  for (int i = 0; i < shape.n_tensors(); ++i) {
    const std::string want = shape.tensor_name(i);
    const Entry* found = nullptr;
    for (const Entry& e : entries)
      if (e.name == want) found = &e;
    if (!found) throw Error(Errc::bad_field, "bundle missing tensor " + want);
    TensorFile t = read_tensor(dir + "/" + found->path);
    if (t.dtype != Dtype::f32 || static_cast<long>(t.f32.size()) != p.t[i].size())
      throw Error(Errc::bad_field, "tensor " + want + " has wrong size/dtype");
    p.t[i] = Eigen::Map<const Arr<float>>(t.f32.data(), static_cast<long>(t.f32.size()));
  }
  return p;
}

}  // namespace octad::model
