// Enumeration-based reference scorers. They share no code with the fast
// scorers in coref_metrics.cpp and work in exact rational arithmetic.

#include <algorithm>
#include <boost/rational.hpp>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "scriptcl/coref_metrics.hpp"
#include "scriptcl/error.hpp"

namespace scriptcl {

namespace {

using Q = boost::rational<long long>;

constexpr std::size_t kMaxMentions = 8;

double to_double(const Q& q) { return boost::rational_cast<double>(q); }

// rational == int recurses under C++20 operator rewriting, so test the numerator.
Q harmonic(const Q& p, const Q& r) { return (p + r).numerator() == 0 ? Q(0) : Q(2) * p * r / (p + r); }

PRF to_prf(const Q& p, const Q& r) { return {to_double(p), to_double(r), to_double(harmonic(p, r))}; }

// Mentions in ascending order with their gold and predicted cluster labels.
struct Labelled {
  std::vector<int> gold;
  std::vector<int> pred;
};

Labelled label(const GoldPredPair& pair) {
  std::map<int, int> gold, pred;
  for (std::size_t k = 0; k < pair.gold.clusters.size(); ++k) {
    if (pair.gold.clusters[k].empty()) throw MentionUniverseMismatch("empty gold cluster");
    for (int m : pair.gold.clusters[k]) {
      if (gold.count(m)) throw MentionUniverseMismatch("mention repeated in gold");
      gold[m] = static_cast<int>(k);
    }
  }
  for (std::size_t k = 0; k < pair.pred.clusters.size(); ++k) {
    if (pair.pred.clusters[k].empty()) throw MentionUniverseMismatch("empty pred cluster");
    for (int m : pair.pred.clusters[k]) {
      if (pred.count(m)) throw MentionUniverseMismatch("mention repeated in pred");
      pred[m] = static_cast<int>(k);
    }
  }
  if (gold.size() > kMaxMentions || pred.size() > kMaxMentions) {
    throw TooLarge("oracle handles at most " + std::to_string(kMaxMentions) + " mentions");
  }
  Labelled out;
  for (const auto& [m, g] : gold) {
    auto it = pred.find(m);
    if (it == pred.end()) throw MentionUniverseMismatch("mention " + std::to_string(m) + " missing from pred");
    out.gold.push_back(g);
    out.pred.push_back(it->second);
  }
  if (pred.size() != gold.size()) throw MentionUniverseMismatch("pred has extra mentions");
  return out;
}

PRF oracle_b_cubed(const Labelled& l) {
  const std::size_t n = l.gold.size();
  if (n == 0) return {0.0, 0.0, 0.0};
  Q p_sum(0), r_sum(0);
  for (std::size_t i = 0; i < n; ++i) {
    long long both = 0, same_pred = 0, same_gold = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const bool g = l.gold[i] == l.gold[j];
      const bool p = l.pred[i] == l.pred[j];
      both += (g && p) ? 1 : 0;
      same_pred += p ? 1 : 0;
      same_gold += g ? 1 : 0;
    }
    p_sum += Q(both, same_pred);
    r_sum += Q(both, same_gold);
  }
  const Q count(static_cast<long long>(n));
  return to_prf(p_sum / count, r_sum / count);
}

PRF oracle_ceaf(const Labelled& l) {
  const int g_count = l.gold.empty() ? 0 : *std::max_element(l.gold.begin(), l.gold.end()) + 1;
  const int p_count = l.pred.empty() ? 0 : *std::max_element(l.pred.begin(), l.pred.end()) + 1;
  if (g_count == 0 || p_count == 0) return {0.0, 0.0, 0.0};
  auto phi = [&](int g, int p) {
    long long inter = 0, gs = 0, ps = 0;
    for (std::size_t i = 0; i < l.gold.size(); ++i) {
      inter += (l.gold[i] == g && l.pred[i] == p) ? 1 : 0;
      gs += l.gold[i] == g ? 1 : 0;
      ps += l.pred[i] == p ? 1 : 0;
    }
    return Q(2 * inter, gs + ps);
  };
  // Pad to a square problem; indices >= the real count are null clusters.
  const int k = std::max(g_count, p_count);
  std::vector<int> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  Q best(0);
  do {
    Q total(0);
    for (int g = 0; g < g_count; ++g) {
      const int p = perm[static_cast<std::size_t>(g)];
      if (p < p_count) total += phi(g, p);
    }
    best = std::max(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return to_prf(best / Q(p_count), best / Q(g_count));
}

PRF oracle_blanc(const Labelled& l) {
  long long rc = 0, wc = 0, wn = 0, rn = 0;
  for (std::size_t i = 0; i < l.gold.size(); ++i) {
    for (std::size_t j = i + 1; j < l.gold.size(); ++j) {
      const bool g = l.gold[i] == l.gold[j];
      const bool p = l.pred[i] == l.pred[j];
      if (g && p) ++rc;
      else if (!g && p) ++wc;
      else if (g && !p) ++wn;
      else ++rn;
    }
  }
  if (rc + wc + wn + rn == 0) throw TooFewMentions("BLANC oracle needs two mentions");
  struct Side {
    Q p, r;
    bool empty;
  };
  auto side = [](long long right, long long predicted, long long gold) {
    return Side{predicted ? Q(right, predicted) : Q(0), gold ? Q(right, gold) : Q(0), predicted == 0 && gold == 0};
  };
  const Side c = side(rc, rc + wc, rc + wn);
  const Side n = side(rn, rn + wn, rn + wc);
  if (c.empty) return to_prf(n.p, n.r);
  if (n.empty) return to_prf(c.p, c.r);
  const Q f = (harmonic(c.p, c.r) + harmonic(n.p, n.r)) / Q(2);
  return {to_double((c.p + n.p) / Q(2)), to_double((c.r + n.r) / Q(2)), to_double(f)};
}

}  // namespace

PRF brute_force_oracle(const GoldPredPair& pair, CorefMetric metric) {
  const Labelled l = label(pair);
  switch (metric) {
    case CorefMetric::kBCubed: return oracle_b_cubed(l);
    case CorefMetric::kCeafPhi4: return oracle_ceaf(l);
    case CorefMetric::kBlanc: return oracle_blanc(l);
  }
  return {};
}

ClassificationReport brute_force_classification(std::span<const int> gold, std::span<const int> pred,
                                                int n_classes) {
  if (gold.size() != pred.size()) throw LengthMismatch("label lists differ in length");
  ClassificationReport report;
  long long tp_all = 0, fp_all = 0, fn_all = 0;
  Q p_sum(0), r_sum(0), f_sum(0);
  long long present = 0;
  for (int c = 0; c < n_classes; ++c) {
    long long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      if (gold[i] == c && pred[i] == c) ++tp;
      if (gold[i] != c && pred[i] == c) ++fp;
      if (gold[i] == c && pred[i] != c) ++fn;
    }
    tp_all += tp;
    fp_all += fp;
    fn_all += fn;
    if (tp + fn == 0) continue;
    ++present;
    const Q p = tp + fp ? Q(tp, tp + fp) : Q(0);
    const Q r(tp, tp + fn);
    p_sum += p;
    r_sum += r;
    f_sum += harmonic(p, r);
  }
  if (present == 0) return report;
  report.micro = to_prf(tp_all + fp_all ? Q(tp_all, tp_all + fp_all) : Q(0),
                        tp_all + fn_all ? Q(tp_all, tp_all + fn_all) : Q(0));
  report.macro = {to_double(p_sum / Q(present)), to_double(r_sum / Q(present)), to_double(f_sum / Q(present))};
  return report;
}

}  // namespace scriptcl
