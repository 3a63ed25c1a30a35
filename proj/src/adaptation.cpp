#include "ldfs/adaptation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "ldfs/cache_io.hpp"
#include "ldfs/kernels.hpp"
#include "ldfs/optimizer.hpp"
#include "ldfs/random.hpp"

namespace ldfs {

using nlohmann::json;

namespace {

std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace

std::size_t zero_shot_classify(std::span<const double> f, const ClassTextBank& bank) {
  if (bank.size() == 0) throw Error("zero-shot classification with an empty class bank");
  if (f.size() != bank.dim()) throw DimensionMismatch("zero-shot: feature and bank dimensions differ");
  Vector scores(bank.size());
  for (std::size_t c = 0; c < bank.size(); ++c) scores[c] = cosine(f, bank.row(c));
  return argmax(scores);
}

std::size_t zero_shot_classify(const UnitVector& f, const ClassTextBank& bank) {
  return zero_shot_classify(f.components(), bank);
}

void LinearProbe::validate() const {
  if (bias.size() != weights.rows()) throw FormatError("probe bias size does not match class count");
  for (double v : weights.values()) {
    if (!std::isfinite(v)) throw FormatError("probe has non-finite weights");
  }
  for (double v : bias) {
    if (!std::isfinite(v)) throw FormatError("probe has non-finite bias");
  }
}

Vector probe_logits(const LinearProbe& probe, std::span<const double> f) {
  if (f.size() != probe.dim()) throw DimensionMismatch("probe: feature dimension mismatch");
  Vector logits(probe.classes());
  for (std::size_t c = 0; c < probe.classes(); ++c) {
    logits[c] = kernels::dot(probe.weights.row(c).data(), f.data(), f.size()) + probe.bias[c];
  }
  return logits;
}

std::size_t predict(const LinearProbe& probe, std::span<const double> f) { return argmax(probe_logits(probe, f)); }
std::size_t predict(const LinearProbe& probe, const UnitVector& f) { return predict(probe, f.components()); }

namespace {

// Softmax probabilities in place; returns log-sum-exp.
double softmax_in_place(Vector& logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double& v : logits) {
    v = std::exp(v - m);
    z += v;
  }
  for (double& v : logits) v /= z;
  return m + std::log(z);
}

double weight_of(std::span<const double> w, std::size_t i) { return w.empty() ? 1.0 : w[i]; }

}  // namespace

double probe_objective(const LinearProbe& probe, const FeatureMatrix& data, std::span<const double> row_weights) {
  if (!row_weights.empty() && row_weights.size() != data.size()) throw DimensionMismatch("row weight count mismatch");
  double total = 0.0;
  double weight_sum = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    Vector logits = probe_logits(probe, data.row(i));
    const double target_logit = logits[static_cast<std::size_t>(data.label(i))];
    const double lse = softmax_in_place(logits);
    const double w = weight_of(row_weights, i);
    total += w * (lse - target_logit);
    weight_sum += w;
  }
  return weight_sum > 0.0 ? total / weight_sum : 0.0;
}

LinearProbe train_linear_probe(const FeatureMatrix& train, std::size_t num_classes, const Schedule& schedule,
                               std::span<const double> row_weights) {
  schedule.validate();
  if (num_classes == 0) throw Error("linear probe needs at least one class");
  if (!row_weights.empty() && row_weights.size() != train.size()) throw DimensionMismatch("row weight count mismatch");
  std::vector<std::size_t> counts(num_classes, 0);
  for (int label : train.labels()) {
    if (label < 0 || static_cast<std::size_t>(label) >= num_classes) {
      throw Error("linear probe: label " + std::to_string(label) + " outside [0, " + std::to_string(num_classes) + ")");
    }
    ++counts[static_cast<std::size_t>(label)];
  }
  std::string missing;
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (counts[c] == 0) {
      if (!missing.empty()) missing += ", ";
      missing += c < train.class_names().size() ? train.class_names()[c] : std::to_string(c);
    }
  }
  if (!missing.empty()) throw Error("linear probe: no training rows for classes: " + missing);
  for (double w : row_weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw Error("linear probe: row weights must be finite and non-negative");
  }

  const std::size_t d = train.dim();
  LinearProbe probe{Matrix(num_classes, d), Vector(num_classes, 0.0)};
  // Parameters as one vector [W | b] for the optimizer.
  std::vector<double> params(num_classes * d + num_classes, 0.0);
  std::vector<double> grad(params.size());
  AdamW optimizer(params.size(), schedule.lr, schedule.weight_decay);
  Rng rng = make_rng(schedule.seed, streams::kProbe);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  auto sync = [&] {
    std::copy(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(num_classes * d), probe.weights.values().begin());
    std::copy(params.begin() + static_cast<std::ptrdiff_t>(num_classes * d), params.end(), probe.bias.begin());
  };

  for (std::size_t epoch = 0; epoch < schedule.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += schedule.batch_size) {
      const std::size_t end = std::min(order.size(), start + schedule.batch_size);
      std::fill(grad.begin(), grad.end(), 0.0);
      double weight_sum = 0.0;
      for (std::size_t b = start; b < end; ++b) weight_sum += weight_of(row_weights, order[b]);
      if (weight_sum <= 0.0) continue;
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t i = order[b];
        const auto f = train.row(i);
        Vector p = probe_logits(probe, f);
        softmax_in_place(p);
        p[static_cast<std::size_t>(train.label(i))] -= 1.0;
        const double scale = weight_of(row_weights, i) / weight_sum;
        for (std::size_t c = 0; c < num_classes; ++c) {
          kernels::axpy(scale * p[c], f.data(), grad.data() + c * d, d);
          grad[num_classes * d + c] += scale * p[c];
        }
      }
      optimizer.step(params, grad);
      sync();
    }
  }
  probe.validate();
  return probe;
}

void save_probe(const std::filesystem::path& dir, const LinearProbe& probe) {
  std::filesystem::create_directories(dir);
  const json manifest = {{"format", "ldfs-linear-probe"},
                         {"version", 1},
                         {"classes", probe.classes()},
                         {"dim", probe.dim()},
                         {"layout", "weights[classes*dim] bias[classes], row-major float32 little-endian"}};
  std::ofstream out(dir / "probe.json", std::ios::trunc);
  if (!out) throw FormatError("cannot write probe manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
  std::vector<double> flat(probe.weights.values().begin(), probe.weights.values().end());
  flat.insert(flat.end(), probe.bias.begin(), probe.bias.end());
  write_f32_blob(dir / "probe.f32", flat);
}

LinearProbe load_probe(const std::filesystem::path& dir) {
  std::ifstream in(dir / "probe.json");
  if (!in) throw FormatError("no probe manifest in " + dir.string());
  try {
    const auto manifest = json::parse(in);
    const auto classes = manifest.at("classes").get<std::size_t>();
    const auto dim = manifest.at("dim").get<std::size_t>();
    const auto flat = read_f32_blob(dir / "probe.f32", classes * dim + classes);
    LinearProbe probe{Matrix(classes, dim), Vector(flat.begin() + static_cast<std::ptrdiff_t>(classes * dim), flat.end())};
    std::copy(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(classes * dim), probe.weights.values().begin());
    probe.validate();
    return probe;
  } catch (const json::exception& e) {
    throw FormatError(dir.string() + ": " + e.what());
  }
}

void FinetuneStrategy::save(const std::filesystem::path&) const {}
void FinetuneStrategy::load(const std::filesystem::path&, const ClassTextBank&) {}

void LinearProbeStrategy::fit(const FeatureMatrix& features, const ClassTextBank& bank,
                              std::span<const double> row_weights) {
  probe_ = train_linear_probe(features, bank.size(), schedule_, row_weights);
}

std::size_t LinearProbeStrategy::predict(std::span<const double> f) const { return ldfs::predict(probe_, f); }
void LinearProbeStrategy::save(const std::filesystem::path& dir) const { save_probe(dir, probe_); }
void LinearProbeStrategy::load(const std::filesystem::path& dir, const ClassTextBank&) { probe_ = load_probe(dir); }

void ZeroShotStrategy::fit(const FeatureMatrix&, const ClassTextBank& bank, std::span<const double>) { bank_ = bank; }
std::size_t ZeroShotStrategy::predict(std::span<const double> f) const { return zero_shot_classify(f, bank_); }
void ZeroShotStrategy::load(const std::filesystem::path&, const ClassTextBank& bank) { bank_ = bank; }

StrategyRegistry::StrategyRegistry() {
  add("linear_probe", [](const StrategyOptions& o) { return std::make_unique<LinearProbeStrategy>(o.schedule); });
  add("zero_shot", [](const StrategyOptions&) { return std::make_unique<ZeroShotStrategy>(); });
}

StrategyRegistry& StrategyRegistry::instance() {
  static StrategyRegistry registry;
  return registry;
}

void StrategyRegistry::add(const std::string& name, Factory factory) { factories_[name] = std::move(factory); }
bool StrategyRegistry::contains(const std::string& name) const { return factories_.count(name) > 0; }

std::unique_ptr<FinetuneStrategy> StrategyRegistry::create(const std::string& name, const StrategyOptions& options) const {
  const auto it = factories_.find(name);
  if (it == factories_.end()) throw ConfigError("unknown finetuning strategy '" + name + "'");
  return it->second(options);
}

std::vector<std::string> StrategyRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : factories_) out.push_back(name);
  return out;
}

}  // namespace ldfs
