#include "scriptcl/coref_metrics.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <string>

#include "scriptcl/error.hpp"
#include "scriptcl/hungarian.hpp"

namespace scriptcl {

std::size_t Clustering::mention_count() const {
  std::size_t n = 0;
  for (const auto& c : clusters) n += c.size();
  return n;
}

PRF PRF::from(double precision, double recall) {
  const double denom = precision + recall;
  return {precision, recall, denom > 0.0 ? 2.0 * precision * recall / denom : 0.0};
}

std::string_view to_string(CorefMetric metric) {
  switch (metric) {
    case CorefMetric::kBCubed: return "b3";
    case CorefMetric::kCeafPhi4: return "ceaf_phi4";
    case CorefMetric::kBlanc: return "blanc";
  }
  return "b3";
}

namespace {

// Cluster sizes and the gold x pred overlap table of one scene.
struct Overlap {
  std::vector<double> gold_sizes;
  std::vector<double> pred_sizes;
  std::vector<std::vector<double>> counts;  // [gold][pred]
  double mentions = 0.0;
};

std::map<int, std::size_t> index_clusters(const Clustering& c, const char* side) {
  std::map<int, std::size_t> owner;
  for (std::size_t k = 0; k < c.clusters.size(); ++k) {
    if (c.clusters[k].empty()) throw MentionUniverseMismatch(std::string(side) + " contains an empty cluster");
    for (int m : c.clusters[k]) {
      if (!owner.emplace(m, k).second) {
        throw MentionUniverseMismatch(std::string(side) + " lists mention " + std::to_string(m) + " twice");
      }
    }
  }
  return owner;
}

Overlap overlap(const GoldPredPair& pair) {
  const auto gold = index_clusters(pair.gold, "gold");
  const auto pred = index_clusters(pair.pred, "pred");
  if (gold.size() != pred.size() ||
      !std::equal(gold.begin(), gold.end(), pred.begin(),
                  [](const auto& a, const auto& b) { return a.first == b.first; })) {
    throw MentionUniverseMismatch("gold and predicted clusterings cover different mentions");
  }
  Overlap o;
  o.mentions = static_cast<double>(gold.size());
  for (const auto& c : pair.gold.clusters) o.gold_sizes.push_back(static_cast<double>(c.size()));
  for (const auto& c : pair.pred.clusters) o.pred_sizes.push_back(static_cast<double>(c.size()));
  o.counts.assign(o.gold_sizes.size(), std::vector<double>(o.pred_sizes.size(), 0.0));
  for (const auto& [m, g] : gold) o.counts[g][pred.at(m)] += 1.0;
  return o;
}

long long pairs_of(double n) {
  const auto k = static_cast<long long>(n);
  return k * (k - 1) / 2;
}

}  // namespace

BCubedCounts& BCubedCounts::operator+=(const BCubedCounts& o) {
  precision_sum += o.precision_sum;
  recall_sum += o.recall_sum;
  mentions += o.mentions;
  return *this;
}

PRF BCubedCounts::score() const {
  if (mentions <= 0.0) return PRF::from(0.0, 0.0);
  return PRF::from(precision_sum / mentions, recall_sum / mentions);
}

CeafCounts& CeafCounts::operator+=(const CeafCounts& o) {
  similarity += o.similarity;
  gold_clusters += o.gold_clusters;
  pred_clusters += o.pred_clusters;
  return *this;
}

PRF CeafCounts::score() const {
  return PRF::from(pred_clusters > 0.0 ? similarity / pred_clusters : 0.0,
                   gold_clusters > 0.0 ? similarity / gold_clusters : 0.0);
}

BlancCounts& BlancCounts::operator+=(const BlancCounts& o) {
  right_coref += o.right_coref;
  wrong_coref += o.wrong_coref;
  wrong_noncoref += o.wrong_noncoref;
  right_noncoref += o.right_noncoref;
  return *this;
}

PRF BlancCounts::score() const {
  struct Side {
    long long right, predicted, gold;
    bool degenerate() const { return predicted == 0 && gold == 0; }
    PRF prf() const {
      return PRF::from(predicted > 0 ? double(right) / double(predicted) : 0.0,
                       gold > 0 ? double(right) / double(gold) : 0.0);
    }
  };
  const Side coref{right_coref, right_coref + wrong_coref, right_coref + wrong_noncoref};
  const Side noncoref{right_noncoref, right_noncoref + wrong_noncoref, right_noncoref + wrong_coref};
  if (coref.degenerate() && noncoref.degenerate()) throw TooFewMentions("BLANC needs at least two mentions");
  if (coref.degenerate()) return noncoref.prf();
  if (noncoref.degenerate()) return coref.prf();
  const PRF c = coref.prf();
  const PRF n = noncoref.prf();
  return {(c.precision + n.precision) / 2.0, (c.recall + n.recall) / 2.0, (c.f1 + n.f1) / 2.0};
}

BCubedCounts b_cubed_counts(const GoldPredPair& pair) {
  const Overlap o = overlap(pair);
  BCubedCounts counts;
  counts.mentions = o.mentions;
  for (std::size_t g = 0; g < o.gold_sizes.size(); ++g) {
    for (std::size_t p = 0; p < o.pred_sizes.size(); ++p) {
      const double n = o.counts[g][p];
      if (n == 0.0) continue;
      counts.precision_sum += n * n / o.pred_sizes[p];
      counts.recall_sum += n * n / o.gold_sizes[g];
    }
  }
  return counts;
}

CeafCounts ceaf_phi4_counts(const GoldPredPair& pair) {
  const Overlap o = overlap(pair);
  CeafCounts counts;
  counts.gold_clusters = static_cast<double>(o.gold_sizes.size());
  counts.pred_clusters = static_cast<double>(o.pred_sizes.size());
  if (o.gold_sizes.empty() || o.pred_sizes.empty()) return counts;
  Eigen::MatrixXd phi(static_cast<Eigen::Index>(o.gold_sizes.size()), static_cast<Eigen::Index>(o.pred_sizes.size()));
  for (std::size_t g = 0; g < o.gold_sizes.size(); ++g) {
    for (std::size_t p = 0; p < o.pred_sizes.size(); ++p) {
      phi(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(p)) =
          2.0 * o.counts[g][p] / (o.gold_sizes[g] + o.pred_sizes[p]);
    }
  }
  const auto match = solve_max_assignment(phi);
  for (std::size_t g = 0; g < match.size(); ++g) {
    if (match[g] >= 0) counts.similarity += phi(static_cast<Eigen::Index>(g), match[g]);
  }
  return counts;
}

BlancCounts blanc_counts(const GoldPredPair& pair) {
  const Overlap o = overlap(pair);
  BlancCounts counts;
  long long gold_links = 0, pred_links = 0;
  for (double s : o.gold_sizes) gold_links += pairs_of(s);
  for (double s : o.pred_sizes) pred_links += pairs_of(s);
  for (const auto& row : o.counts) {
    for (double n : row) counts.right_coref += pairs_of(n);
  }
  counts.wrong_coref = pred_links - counts.right_coref;
  counts.wrong_noncoref = gold_links - counts.right_coref;
  counts.right_noncoref = pairs_of(o.mentions) - counts.right_coref - counts.wrong_coref - counts.wrong_noncoref;
  return counts;
}

PRF b_cubed(const GoldPredPair& pair) { return b_cubed_counts(pair).score(); }
PRF ceaf_phi4(const GoldPredPair& pair) { return ceaf_phi4_counts(pair).score(); }
PRF blanc(const GoldPredPair& pair) { return blanc_counts(pair).score(); }

CorefReport score_coreference(std::span<const GoldPredPair> scenes) {
  BCubedCounts b3;
  CeafCounts ceaf;
  BlancCounts links;
  for (const auto& pair : scenes) {
    b3 += b_cubed_counts(pair);
    ceaf += ceaf_phi4_counts(pair);
    links += blanc_counts(pair);
  }
  CorefReport report;
  report.b_cubed = b3.score();
  report.ceaf_phi4 = ceaf.score();
  report.blanc = links.score();
  report.conll_avg = (report.b_cubed.f1 + report.ceaf_phi4.f1 + report.blanc.f1) / 3.0;
  return report;
}

ClassificationReport micro_macro_f1(std::span<const int> gold, std::span<const int> pred, int n_classes) {
  if (gold.size() != pred.size()) throw LengthMismatch("gold and predicted label lists differ in length");
  if (n_classes < 1) throw LabelOutOfRange("n_classes must be >= 1");
  const auto n = static_cast<std::size_t>(n_classes);
  std::vector<double> tp(n, 0.0), fp(n, 0.0), fn(n, 0.0);
  double correct = 0.0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] < 0 || gold[i] >= n_classes || pred[i] < 0 || pred[i] >= n_classes) {
      throw LabelOutOfRange("label outside [0, " + std::to_string(n_classes) + ")");
    }
    if (gold[i] == pred[i]) {
      tp[static_cast<std::size_t>(gold[i])] += 1.0;
      correct += 1.0;
    } else {
      fn[static_cast<std::size_t>(gold[i])] += 1.0;
      fp[static_cast<std::size_t>(pred[i])] += 1.0;
    }
  }
  ClassificationReport report;
  if (gold.empty()) return report;
  // Single-label: pooled FP and FN both equal the number of errors.
  const double accuracy = correct / static_cast<double>(gold.size());
  report.micro = PRF::from(accuracy, accuracy);
  double p_sum = 0.0, r_sum = 0.0, f_sum = 0.0, classes = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    if (tp[c] + fn[c] == 0.0) continue;
    const PRF prf = PRF::from(tp[c] + fp[c] > 0.0 ? tp[c] / (tp[c] + fp[c]) : 0.0, tp[c] / (tp[c] + fn[c]));
    p_sum += prf.precision;
    r_sum += prf.recall;
    f_sum += prf.f1;
    classes += 1.0;
  }
  report.macro = {p_sum / classes, r_sum / classes, f_sum / classes};
  return report;
}

}  // namespace scriptcl
