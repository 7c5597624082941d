#include "ifcomp/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace ifcomp::model {

namespace {

constexpr double kProbFloor = 1e-30;

void check_label(int label, std::size_t classes) {
  if (label < 0 || static_cast<std::size_t>(label) >= classes) {
    throw DimensionError("invalid class index " + std::to_string(label) +
                         " for " + std::to_string(classes) + " classes");
  }
}

void check_beta(double beta) { TempConfig{beta}.validate(); }

double log_sum_exp_scaled(const Vector& logits, double beta, double* scaled_label,
                          int label) {
  double max_s = -std::numeric_limits<double>::infinity();
  for (const double l : logits) max_s = std::max(max_s, beta * l);
  double acc = 0.0;
  for (const double l : logits) acc += std::exp(beta * l - max_s);
  if (scaled_label != nullptr) *scaled_label = beta * logits[static_cast<std::size_t>(label)];
  return max_s + std::log(acc);
}

}  // namespace

void TempConfig::validate() const {
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw ConfigError("beta must be finite and > 0, got " + std::to_string(beta));
  }
}

std::size_t MlpParams::param_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers)
    n += layer.weight.data.size() + layer.bias.size();
  return n;
}

Vector MlpParams::flatten() const {
  Vector flat;
  flat.reserve(param_count());
  for (const auto& layer : layers) {
    flat.insert(flat.end(), layer.weight.data.begin(), layer.weight.data.end());
    flat.insert(flat.end(), layer.bias.begin(), layer.bias.end());
  }
  return flat;
}

void MlpParams::assign_flat(const Vector& flat) {
  if (flat.size() != param_count()) {
    throw DimensionError("assign_flat: expected " + std::to_string(param_count()) +
                         " values, got " + std::to_string(flat.size()));
  }
  std::size_t off = 0;
  for (auto& layer : layers) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off),
                layer.weight.data.size(), layer.weight.data.begin());
    off += layer.weight.data.size();
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off),
                layer.bias.size(), layer.bias.begin());
    off += layer.bias.size();
  }
}

std::vector<LayerOffsets> layer_offsets(const MlpParams& params) {
  std::vector<LayerOffsets> out;
  out.reserve(params.layers.size());
  std::size_t off = 0;
  for (const auto& layer : params.layers) {
    LayerOffsets lo;
    lo.d_out = layer.weight.rows;
    lo.d_in = layer.weight.cols;
    lo.weight_begin = off;
    off += layer.weight.data.size();
    lo.bias_begin = off;
    off += layer.bias.size();
    out.push_back(lo);
  }
  return out;
}

MlpParams make_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                   std::size_t classes, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::size_t> dims;
  dims.push_back(input_dim);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(classes);

  MlpParams params;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    DenseLayer layer;
    layer.weight = Matrix(dims[l + 1], dims[l]);
    const double scale = std::sqrt(2.0 / static_cast<double>(dims[l]));
    for (double& w : layer.weight.data) w = scale * rng.normal();
    layer.bias.assign(dims[l + 1], 0.0);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

ForwardTrace forward(const MlpParams& params, const Vector& x) {
  if (x.size() != params.input_dim()) {
    throw DimensionError("forward: input dimension " + std::to_string(x.size()) +
                         " does not match model input " +
                         std::to_string(params.input_dim()));
  }
  ForwardTrace trace;
  trace.layer_inputs.reserve(params.layers.size());
  trace.pre_activations.reserve(params.layers.size());
  Vector a = x;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    trace.layer_inputs.push_back(a);
    Vector z = linalg::matvec(layer.weight, a);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += layer.bias[i];
    trace.pre_activations.push_back(z);
    if (l + 1 < params.layers.size()) {
      a = z;
      for (double& v : a) v = std::max(v, 0.0);
    }
  }
  return trace;
}

Vector softmax_temp(const Vector& logits, double beta) {
  check_beta(beta);
  if (logits.empty()) throw DimensionError("softmax_temp: empty logits");
  Vector scaled(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) scaled[i] = beta * logits[i];
  const double max_s = *std::max_element(scaled.begin(), scaled.end());
  double sum = 0.0;
  for (double& v : scaled) {
    v = std::exp(v - max_s);
    sum += v;
  }
  for (double& v : scaled) v = std::max(v / sum, kProbFloor);
  return scaled;
}

double energy_from_logits(const Vector& logits, int label, double beta) {
  check_beta(beta);
  check_label(label, logits.size());
  double scaled_label = 0.0;
  const double lse = log_sum_exp_scaled(logits, beta, &scaled_label, label);
  const double e = lse - scaled_label;
  return std::min(e, -std::log(kProbFloor));
}

double energy(const MlpParams& params, const Vector& x, int label, double beta) {
  return energy_from_logits(forward(params, x).logits(), label, beta);
}

Vector energy_logit_grad(const Vector& logits, int label, double beta) {
  check_label(label, logits.size());
  Vector g = softmax_temp(logits, beta);
  g[static_cast<std::size_t>(label)] -= 1.0;
  for (double& v : g) v *= beta;
  return g;
}

std::vector<Vector> backprop_deltas(const MlpParams& params,
                                    const ForwardTrace& trace,
                                    const Vector& logit_grad) {
  const std::size_t layer_count = params.layers.size();
  if (logit_grad.size() != params.output_dim()) {
    throw DimensionError("backprop_deltas: logit gradient length mismatch");
  }
  std::vector<Vector> deltas(layer_count);
  deltas[layer_count - 1] = logit_grad;
  for (std::size_t l = layer_count - 1; l > 0; --l) {
    Vector prev = linalg::tmatvec(params.layers[l].weight, deltas[l]);
    const Vector& pre = trace.pre_activations[l - 1];
    for (std::size_t i = 0; i < prev.size(); ++i) {
      if (pre[i] <= 0.0) prev[i] = 0.0;
    }
    deltas[l - 1] = std::move(prev);
  }
  return deltas;
}

Vector flatten_layer_grads(const MlpParams& params, const ForwardTrace& trace,
                           const std::vector<Vector>& deltas) {
  Vector grad(params.param_count(), 0.0);
  std::size_t off = 0;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const Vector& a = trace.layer_inputs[l];
    const Vector& d = deltas[l];
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double di = d[i];
      double* row = &grad[off + i * a.size()];
      for (std::size_t j = 0; j < a.size(); ++j) row[j] = di * a[j];
    }
    off += d.size() * a.size();
    for (std::size_t i = 0; i < d.size(); ++i) grad[off + i] = d[i];
    off += d.size();
  }
  return grad;
}

Vector grad_from_logit_grad(const MlpParams& params, const ForwardTrace& trace,
                            const Vector& logit_grad) {
  return flatten_layer_grads(params, trace,
                             backprop_deltas(params, trace, logit_grad));
}

Vector grad_energy(const MlpParams& params, const Vector& x, int label,
                   double beta) {
  const ForwardTrace trace = forward(params, x);
  return grad_from_logit_grad(params, trace,
                              energy_logit_grad(trace.logits(), label, beta));
}

double kl_temp(const Vector& p_logits, const Vector& q_logits, double beta) {
  check_beta(beta);
  if (p_logits.size() != q_logits.size()) {
    throw DimensionError("kl_temp: logit lengths differ");
  }
  const Vector p = softmax_temp(p_logits, beta);
  const Vector q = softmax_temp(q_logits, beta);
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    kl += p[i] * (std::log(p[i]) - std::log(q[i]));
  }
  return std::max(kl, 0.0);
}

namespace {

constexpr char kParamsMagic[4] = {'M', 'L', 'P', 'C'};
constexpr std::uint32_t kParamsVersion = 1;

template <typename T>
void write_raw(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_raw(std::ifstream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in.good()) throw FormatError("checkpoint: unexpected end of file");
}

}  // namespace

void save_params(const MlpParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open checkpoint for writing: " + path);
  out.write(kParamsMagic, 4);
  write_raw(out, kParamsVersion);
  write_raw(out, static_cast<std::uint32_t>(params.layers.size()));
  for (const auto& layer : params.layers) {
    write_raw(out, static_cast<std::uint32_t>(layer.weight.rows));
    write_raw(out, static_cast<std::uint32_t>(layer.weight.cols));
    out.write(reinterpret_cast<const char*>(layer.weight.data.data()),
              static_cast<std::streamsize>(layer.weight.data.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(layer.bias.data()),
              static_cast<std::streamsize>(layer.bias.size() * sizeof(double)));
  }
  if (!out.good()) throw FormatError("checkpoint write failed: " + path);
}

MlpParams load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in.good() || std::memcmp(magic, kParamsMagic, 4) != 0) {
    throw FormatError("checkpoint: bad magic in " + path);
  }
  std::uint32_t version = 0;
  read_raw(in, version);
  if (version != kParamsVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  std::uint32_t layer_count = 0;
  read_raw(in, layer_count);
  MlpParams params;
  for (std::uint32_t l = 0; l < layer_count; ++l) {
    std::uint32_t rows = 0, cols = 0;
    read_raw(in, rows);
    read_raw(in, cols);
    DenseLayer layer;
    layer.weight = Matrix(rows, cols);
    in.read(reinterpret_cast<char*>(layer.weight.data.data()),
            static_cast<std::streamsize>(layer.weight.data.size() * sizeof(double)));
    layer.bias.resize(rows);
    in.read(reinterpret_cast<char*>(layer.bias.data()),
            static_cast<std::streamsize>(layer.bias.size() * sizeof(double)));
    if (!in.good()) throw FormatError("checkpoint: truncated layer data in " + path);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

}  // namespace ifcomp::model
