#include "ifcomp/pnml.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"

namespace ifcomp::pnml {

void PnmlConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    throw ConfigError("pnml: alpha must be finite and >= 0");
  }
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw ConfigError("pnml: beta must be finite and > 0");
  }
  if (n < 1) throw ConfigError("pnml: n must be >= 1");
}

double parametric_complexity(const influence::BifVector& bif,
                             const Vector& probs) {
  if (bif.values.size() != probs.size()) {
    throw DimensionError("parametric_complexity: length mismatch");
  }
  double acc = 0.0;
  for (std::size_t y = 0; y < probs.size(); ++y) {
    acc += probs[y] * bif.values[y];
  }
  return acc;
}

double full_complexity(double error_term, double parametric, std::size_t n) {
  return error_term + parametric / static_cast<double>(n);
}

Vector pnml_distribution(const Vector& probs, const influence::BifVector& bif,
                         const PnmlConfig& config) {
  config.validate();
  if (probs.size() != bif.values.size()) {
    throw DimensionError("pnml_distribution: length mismatch");
  }
  const double scale = config.alpha / static_cast<double>(config.n);
  double denom = 1.0;
  for (std::size_t y = 0; y < probs.size(); ++y) {
    denom += scale * probs[y] * bif.values[y];
  }
  Vector out(probs.size());
  for (std::size_t y = 0; y < probs.size(); ++y) {
    out[y] = (probs[y] + scale * probs[y] * bif.values[y]) / denom;
  }
  return out;
}

ExactPnml boltzmann_pnml_exact(const Vector& oracle_probs) {
  if (oracle_probs.empty()) {
    throw DimensionError("boltzmann_pnml_exact: empty input");
  }
  double sum = 0.0;
  for (const double p : oracle_probs) {
    if (p < 0.0 || p > 1.0 || !std::isfinite(p)) {
      throw ConfigError("boltzmann_pnml_exact: probabilities must be in [0, 1]");
    }
    sum += p;
  }
  if (sum <= 0.0) {
    throw NumericalError("boltzmann_pnml_exact: all oracle probabilities are zero");
  }
  ExactPnml out;
  out.distribution.resize(oracle_probs.size());
  out.per_label_complexity.resize(oracle_probs.size());
  out.log_normalizer = std::log(sum);
  for (std::size_t y = 0; y < oracle_probs.size(); ++y) {
    out.distribution[y] = oracle_probs[y] / sum;
    out.per_label_complexity[y] =
        -std::log(std::max(oracle_probs[y], 1e-300)) + out.log_normalizer;
  }
  return out;
}

void write_records_jsonl(const std::vector<ScoreRecord>& records,
                         const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open jsonl for writing: " + path);
  for (const auto& r : records) {
    nlohmann::json j;
    j["id"] = r.id;
    if (r.error_term) j["error"] = *r.error_term;
    j["par_comp"] = r.parametric;
    if (r.total) j["total"] = *r.total;
    j["beta"] = r.bif.beta;
    j["bif"] = r.bif.values;
    if (r.pnml_dist) j["pnml"] = *r.pnml_dist;
    out << j.dump() << "\n";
  }
  if (!out.good()) throw FormatError("jsonl write failed: " + path);
}

void write_records_csv(const std::vector<ScoreRecord>& records,
                       const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open csv for writing: " + path);
  const std::size_t classes = records.empty() ? 0 : records[0].bif.values.size();
  out << "id,error,par_comp,total";
  for (std::size_t y = 0; y < classes; ++y) out << ",bif_" << y;
  for (std::size_t y = 0; y < classes; ++y) out << ",pnml_" << y;
  out << "\n";
  char buf[40];
  auto emit = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << buf;
  };
  for (const auto& r : records) {
    out << r.id << ",";
    if (r.error_term) emit(*r.error_term);
    out << ",";
    emit(r.parametric);
    out << ",";
    if (r.total) emit(*r.total);
    for (const double v : r.bif.values) {
      out << ",";
      emit(v);
    }
    if (r.pnml_dist) {
      for (const double v : *r.pnml_dist) {
        out << ",";
        emit(v);
      }
    } else {
      for (std::size_t y = 0; y < classes; ++y) out << ",";
    }
    out << "\n";
  }
  if (!out.good()) throw FormatError("csv write failed: " + path);
}

}  // namespace ifcomp::pnml
