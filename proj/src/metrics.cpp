#include "ldfs/metrics.hpp"

#include <algorithm>
#include <set>

#include "ldfs/kernels.hpp"
#include "ldfs/random.hpp"
#include "ldfs/text_engine.hpp"

namespace ldfs {

std::vector<Neighbor> nearest_neighbor(std::span<const double> query, const FeatureMatrix& pool, std::size_t k) {
  if (pool.empty()) throw Error("nearest neighbour search over an empty pool");
  if (query.size() != pool.dim()) throw DimensionMismatch("nearest neighbour: query and pool dimensions differ");
  k = std::min(k, pool.size());
  std::vector<Neighbor> all(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) all[i] = {i, cosine(query, pool.row(i))};
  const auto better = [](const Neighbor& a, const Neighbor& b) {
    return a.cosine != b.cosine ? a.cosine > b.cosine : a.index < b.index;
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), better);
  all.resize(k);
  return all;
}

std::vector<Neighbor> nearest_neighbor(const UnitVector& query, const FeatureMatrix& pool, std::size_t k) {
  return nearest_neighbor(query.components(), pool, k);
}

std::vector<Neighbor> nearest_neighbors(const FeatureMatrix& queries, const FeatureMatrix& pool) {
  if (pool.empty()) throw Error("nearest neighbour search over an empty pool");
  if (queries.dim() != pool.dim() && !queries.empty()) throw DimensionMismatch("nearest neighbour: dimensions differ");
  std::vector<Neighbor> out(queries.size());
  const std::size_t d = pool.dim();
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const double* query = queries.row(q).data();
    Neighbor best{0, -2.0};
    for (std::size_t i = 0; i < pool.size(); ++i) {
      const double c = std::clamp(kernels::dot(query, pool.row(i).data(), d), -1.0, 1.0);
      if (c > best.cosine) best = {i, c};
    }
    out[q] = best;
  }
  return out;
}

FeatureMatrix without_domain(const FeatureMatrix& pool, int domain) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool.domain(i) != domain) keep.push_back(i);
  }
  return pool.select(keep);
}

namespace {

void require_labeled(const FeatureMatrix& pool) {
  for (int label : pool.labels()) {
    if (label == kUnlabeled) throw Error("pool contains unlabeled rows");
  }
}

double fraction(std::size_t hits, std::size_t total) {
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace

double da_score(const FeatureMatrix& synthetic, const FeatureMatrix& pool, std::optional<int> target) {
  std::set<int> pool_domains(pool.domain_tags().begin(), pool.domain_tags().end());
  if (pool_domains.size() < 2) throw Error("DA score needs pools from at least two domains");
  std::set<int> wanted;
  if (target) {
    wanted.insert(*target);
  } else {
    wanted.insert(synthetic.domain_tags().begin(), synthetic.domain_tags().end());
  }
  for (int t : wanted) {
    if (!pool_domains.count(t)) throw Error("DA score: target domain " + std::to_string(t) + " has an empty pool");
  }
  const auto nn = nearest_neighbors(synthetic, pool);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < nn.size(); ++i) {
    const int goal = target ? *target : synthetic.domain(i);
    if (pool.domain(nn[i].index) == goal) ++hits;
  }
  return fraction(hits, nn.size());
}

double cc_score(const FeatureMatrix& synthetic, const FeatureMatrix& pool) {
  require_labeled(pool);
  const auto nn = nearest_neighbors(synthetic, pool);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < nn.size(); ++i) {
    if (pool.label(nn[i].index) == synthetic.label(i)) ++hits;
  }
  return fraction(hits, nn.size());
}

double ds_score(const FeatureMatrix& synthetic, const FeatureMatrix& pool, DiversityRule rule) {
  require_labeled(pool);
  const auto nn = nearest_neighbors(synthetic, pool);
  std::size_t repeated = 0;
  if (rule == DiversityRule::first_claim) {
    std::set<std::pair<int, std::size_t>> claimed;
    for (std::size_t i = 0; i < nn.size(); ++i) {
      if (!claimed.emplace(synthetic.label(i), nn[i].index).second) ++repeated;
    }
  } else {
    std::set<std::size_t> claimed;
    for (const auto& n : nn) {
      if (!claimed.insert(n.index).second) ++repeated;
    }
  }
  return nn.empty() ? 0.0 : 1.0 - fraction(repeated, nn.size());
}

AccuracyReport evaluate_accuracy(const FinetuneStrategy& strategy,
                                 const std::vector<std::pair<std::string, FeatureMatrix>>& test_sets) {
  AccuracyReport report;
  if (test_sets.empty()) return report;
  double sum = 0.0;
  for (const auto& [name, set] : test_sets) {
    if (set.empty()) throw Error("empty test set for domain '" + name + "'");
    require_labeled(set);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < set.size(); ++i) {
      if (static_cast<int>(strategy.predict(set.row(i))) == set.label(i)) ++correct;
    }
    const double acc = fraction(correct, set.size());
    report.per_domain[name] = acc;
    sum += acc;
  }
  report.average = sum / static_cast<double>(test_sets.size());
  return report;
}

std::vector<GapPoint> gap_sweep(const Matrix& images, const Matrix& texts, std::span<const double> gammas,
                                std::span<const std::uint64_t> seeds) {
  if (gammas.empty()) throw Error("gap sweep needs at least one gamma");
  if (seeds.empty()) throw Error("gap sweep needs at least one seed");
  if (images.empty() || texts.empty()) throw Error("gap sweep over an empty set");
  std::vector<GapPoint> curve;
  curve.reserve(gammas.size());
  for (double gamma : gammas) {
    double total = 0.0;
    for (std::uint64_t seed : seeds) {
      Rng rng = make_rng(seed, streams::kGap);
      Matrix perturbed(texts.rows(), texts.cols());
      for (std::size_t r = 0; r < texts.rows(); ++r) {
        const UnitVector t = perturb_text(UnitVector::from_unit(texts.row(r)), gamma, rng);
        std::copy(t.components().begin(), t.components().end(), perturbed.row(r).begin());
      }
      total += modality_gap(images, perturbed);
    }
    curve.push_back({gamma, total / static_cast<double>(seeds.size())});
  }
  return curve;
}

std::vector<NnRecord> nn_table(const FeatureMatrix& synthetic, const FeatureMatrix& pool) {
  const auto nn = nearest_neighbors(synthetic, pool);
  std::vector<NnRecord> out;
  out.reserve(nn.size());
  for (std::size_t i = 0; i < nn.size(); ++i) {
    const std::size_t j = nn[i].index;
    out.push_back({synthetic.instance_id(i), synthetic.label(i), synthetic.domain(i), pool.instance_id(j), pool.domain(j),
                   pool.label(j), nn[i].cosine});
  }
  return out;
}

SynthesisScores score_synthesis(const FeatureMatrix& synthetic, const FeatureMatrix& pool, int source_domain) {
  SynthesisScores s;
  s.rows = synthetic.size();
  s.da = da_score(synthetic, pool);
  const FeatureMatrix targets_only = without_domain(pool, source_domain);
  std::set<int> remaining(targets_only.domain_tags().begin(), targets_only.domain_tags().end());
  // With a single target domain left every NN trivially lands in it.
  s.da_without_source = remaining.size() >= 2 ? da_score(synthetic, targets_only) : 1.0;
  s.cc = cc_score(synthetic, pool);
  s.ds = ds_score(synthetic, pool);
  return s;
}

void EvalReport::validate() const {
  auto check = [](double v, const std::string& what) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error(what + " outside [0, 1]");
  };
  if (scores) {
    check(scores->da, "DA score");
    check(scores->da_without_source, "DA score");
    check(scores->cc, "CC score");
    check(scores->ds, "DS score");
  }
  for (const auto& [name, acc] : accuracy.per_domain) check(acc, "accuracy for " + name);
  for (const auto& [name, acc] : zero_shot_accuracy.per_domain) check(acc, "zero-shot accuracy for " + name);
}

}  // namespace ldfs
