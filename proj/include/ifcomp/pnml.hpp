#pragma once

#include <optional>
#include <string>

#include "ifcomp/influence.hpp"

namespace ifcomp::pnml {

struct PnmlConfig {
  double alpha = 1.0;  // test-point weight, >= 0
  double beta = 1.0;
  std::size_t n = 1;   // training count
  void validate() const;
};

/// Expected influence under the model's own label distribution.
double parametric_complexity(const influence::BifVector& bif,
                             const Vector& probs);

/// error + parametric/n, both in nats.
double full_complexity(double error_term, double parametric, std::size_t n);

/// Influence-weighted posterior over labels:
///   p_y (1 + (alpha/n) bif_y) / (1 + (alpha/n) sum_y' p_y' bif_y').
/// alpha = 0 returns probs unchanged.
Vector pnml_distribution(const Vector& probs, const influence::BifVector& bif,
                         const PnmlConfig& config);

/// Normalized hindsight-optimal probabilities and the log-normalizer; the
/// exact route used to validate the influence estimates.
struct ExactPnml {
  Vector distribution;
  double log_normalizer = 0.0;       // parametric complexity term
  Vector per_label_complexity;       // -log p_y + log_normalizer
};

ExactPnml boltzmann_pnml_exact(const Vector& oracle_probs);

/// One scored example, ready for JSONL/CSV emission.
struct ScoreRecord {
  std::size_t id = 0;
  std::optional<double> error_term;   // absent for unlabelled inputs
  double parametric = 0.0;
  std::optional<double> total;
  influence::BifVector bif;
  std::optional<Vector> pnml_dist;
};

void write_records_jsonl(const std::vector<ScoreRecord>& records,
                         const std::string& path);
void write_records_csv(const std::vector<ScoreRecord>& records,
                       const std::string& path);

}  // namespace ifcomp::pnml
