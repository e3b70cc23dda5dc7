#pragma once

#include <span>
#include <string_view>
#include <vector>

namespace scriptcl {

// A partition of one scene's mention ids.
struct Clustering {
  std::vector<std::vector<int>> clusters;
  std::size_t mention_count() const;
};

// Gold and predicted clusterings over the same mention universe.
struct GoldPredPair {
  Clustering gold;
  Clustering pred;
};

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  // f1 is the harmonic mean, 0 when precision + recall is 0.
  static PRF from(double precision, double recall);
};

enum class CorefMetric { kBCubed, kCeafPhi4, kBlanc };
std::string_view to_string(CorefMetric metric);

// Per-scene sufficient statistics; summing them over scenes and converting
// once gives the micro-average over the whole split.
struct BCubedCounts {
  double precision_sum = 0.0;
  double recall_sum = 0.0;
  double mentions = 0.0;
  BCubedCounts& operator+=(const BCubedCounts& o);
  PRF score() const;
};

struct CeafCounts {
  double similarity = 0.0;  // total phi4 of the optimal alignment
  double gold_clusters = 0.0;
  double pred_clusters = 0.0;
  CeafCounts& operator+=(const CeafCounts& o);
  PRF score() const;
};

// Mention-pair link counts: right/wrong coreference and non-coreference.
struct BlancCounts {
  long long right_coref = 0;
  long long wrong_coref = 0;
  long long wrong_noncoref = 0;
  long long right_noncoref = 0;
  BlancCounts& operator+=(const BlancCounts& o);
  // Throws TooFewMentions when there is no mention pair at all.
  PRF score() const;
};

BCubedCounts b_cubed_counts(const GoldPredPair& pair);
CeafCounts ceaf_phi4_counts(const GoldPredPair& pair);
BlancCounts blanc_counts(const GoldPredPair& pair);

// Throw MentionUniverseMismatch when gold and pred cover different mentions.
PRF b_cubed(const GoldPredPair& pair);
PRF ceaf_phi4(const GoldPredPair& pair);
PRF blanc(const GoldPredPair& pair);

struct CorefReport {
  PRF b_cubed;
  PRF ceaf_phi4;
  PRF blanc;
  double conll_avg = 0.0;  // mean of the three F1 scores
};

// Micro-averaged over all scenes' mentions, clusters and links.
CorefReport score_coreference(std::span<const GoldPredPair> scenes);

struct ClassificationReport {
  PRF micro;
  // Mean of per-class precision, recall and F1 over classes present in gold.
  PRF macro;
};

ClassificationReport micro_macro_f1(std::span<const int> gold, std::span<const int> pred, int n_classes);

// Independent enumeration-based reference implementations using exact
// rational arithmetic (at most 8 mentions; TooLarge otherwise).
PRF brute_force_oracle(const GoldPredPair& pair, CorefMetric metric);
ClassificationReport brute_force_classification(std::span<const int> gold, std::span<const int> pred,
                                                int n_classes);

}  // namespace scriptcl
