#pragma once

#include "mvfd/autodiff.hpp"
#include "mvfd/common.hpp"

#include <string>
#include <vector>

namespace mvfd {

enum class Activation { kIdentity, kRelu, kTanh };

inline Activation activation_from_name(const std::string& name) {
  if (name == "identity") return Activation::kIdentity;
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  throw ValidationError("unknown activation '" + name + "' (expected identity|relu|tanh)");
}

inline std::string activation_name(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
  }
  return "identity";
}

// Fully-connected architecture: layer_widths = [in, hidden..., out]. The
// hidden activation applies to all but the last affine layer; the output
// activation to the last.
struct MlpSpec {
  std::vector<int> layer_widths;
  Activation hidden_activation = Activation::kRelu;
  Activation output_activation = Activation::kIdentity;

  void validate() const {
    require(layer_widths.size() >= 2, "MlpSpec: need at least [in, out] widths");
    for (int w : layer_widths) require(w >= 1, "MlpSpec: layer widths must be >= 1");
  }
  int in_dim() const { return layer_widths.front(); }
  int out_dim() const { return layer_widths.back(); }
};

struct DenseLayer {
  Mat weight;  // in x out
  Mat bias;    // 1 x out
};

struct Mlp {
  MlpSpec spec;
  std::vector<DenseLayer> layers;

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights, zero biases.
  static Mlp init(const MlpSpec& spec, Rng& rng) {
    spec.validate();
    Mlp m;
    m.spec = spec;
    for (size_t l = 0; l + 1 < spec.layer_widths.size(); ++l) {
      const int in = spec.layer_widths[l];
      const int out = spec.layer_widths[l + 1];
      DenseLayer layer;
      layer.weight.resize(in, out);
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      for (Eigen::Index i = 0; i < layer.weight.size(); ++i)
        layer.weight(i) = rng.uniform(-bound, bound);
      layer.bias = Mat::Zero(1, out);
      m.layers.push_back(std::move(layer));
    }
    return m;
  }

  Mat forward(const Mat& x) const {
    require(x.cols() == spec.in_dim(),
            "Mlp::forward: input has " + std::to_string(x.cols()) + " columns, expected " +
                std::to_string(spec.in_dim()));
    Mat h = x;
    for (size_t l = 0; l < layers.size(); ++l) {
      h = (h * layers[l].weight).rowwise() + layers[l].bias.row(0);
      const Activation act =
          l + 1 == layers.size() ? spec.output_activation : spec.hidden_activation;
      apply_activation(h, act);
    }
    return h;
  }

  size_t parameter_count() const {
    size_t n = 0;
    for (const auto& l : layers) n += static_cast<size_t>(l.weight.size() + l.bias.size());
    return n;
  }

  static void apply_activation(Mat& h, Activation act) {
    switch (act) {
      case Activation::kIdentity: break;
      case Activation::kRelu: h = h.cwiseMax(0.0); break;
      case Activation::kTanh: h = h.array().tanh().matrix(); break;
    }
  }
};

// Tape-side mirror of an Mlp: its parameters registered as leaves so that
// gradients can be read back after backward().
struct LiftedMlp {
  const Mlp* source = nullptr;
  std::vector<std::pair<Var, Var>> layers;  // (weight, bias)

  Var forward(Tape& t, Var x) const {
    Var h = x;
    for (size_t l = 0; l < layers.size(); ++l) {
      h = t.add_bias(t.matmul(h, layers[l].first), layers[l].second);
      const Activation act =
          l + 1 == layers.size() ? source->spec.output_activation : source->spec.hidden_activation;
      switch (act) {
        case Activation::kIdentity: break;
        case Activation::kRelu: h = t.relu(h); break;
        case Activation::kTanh: h = t.tanh_(h); break;
      }
    }
    return h;
  }
};

inline LiftedMlp lift(Tape& t, const Mlp& m) {
  LiftedMlp lm;
  lm.source = &m;
  for (const auto& layer : m.layers)
    lm.layers.emplace_back(t.leaf(layer.weight), t.leaf(layer.bias));
  return lm;
}

}  // namespace mvfd
