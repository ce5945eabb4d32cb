#pragma once

// Numeric execution of a built graph: parameter storage, the training/infer
// forward pass, stage-output fusion, and pruned inference.

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "plnet/autograd.hpp"
#include "plnet/rng.hpp"
#include "plnet/wiring.hpp"

namespace plnet {

template <typename T>
struct NodeParams {
  Var<T> w, b;           // convolution kernel and bias
  Var<T> gamma, beta;    // present when the unit carries normalization
  ops::BnState<T> bn;
};

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T>* tensor;
  bool learnable;
};

template <typename T>
struct ForwardResult {
  std::vector<Var<T>> logits;   // one per executed stage
  Var<T> out;                   // last stage's final feature
  std::vector<Var<T>> final_dec;
};

enum class PredictMode { fused, final_stage };

template <typename T>
class Model;

// Executor over autograd values; one instance per forward pass.
template <typename T>
class ValueExec {
 public:
  using V = Var<T>;
  using BscProbe =
      std::function<void(int stage, int pass, int level, const Tensor<T>& bwd, const Tensor<T>& xin)>;

  ValueExec(Model<T>& model, Tape<T>& tape) : model_(&model), tape_(&tape) {}

  V unit(int idx, const V& in);
  V pool(const V& in) { return ag::maxpool2(*tape_, in); }
  V upsample(const V& in) { return ag::upsample2(*tape_, in); }
  V concat(const V& a, const V& b) { return ag::concat(*tape_, a, b); }
  void probe_bsc(int stage, int pass, int level, const V& bwd, const V& xin) {
    if (bsc_probe) bsc_probe(stage, pass, level, bwd.value(), xin.value());
  }

  BscProbe bsc_probe;

 private:
  Model<T>* model_;
  Tape<T>* tape_;
};

template <typename T>
class Model {
 public:
  Model(ComputeGraph graph, std::uint64_t seed) : g_(std::move(graph)) {
    validate_shapes(g_);
    init_params(seed);
  }

  const ComputeGraph& graph() const { return g_; }
  NodeParams<T>& params(int idx) { return params_[idx]; }

  void set_train(bool on) { train_ = on; }
  bool training() const { return train_; }

  // Runs up to `stages_to_run` stages (-1 = all) with `passes` sweeps each
  // (-1 = configured step count).
  ForwardResult<T> forward(Tape<T>& tape, const Tensor<T>& x, int stages_to_run = -1,
                           int passes = -1, typename ValueExec<T>::BscProbe probe = nullptr) {
    ValueExec<T> ex(*this, tape);
    ex.bsc_probe = std::move(probe);
    auto input = Var<T>::leaf(x, false);
    auto r = run_network(g_, ex, input, stages_to_run, passes);
    ForwardResult<T> out;
    out.logits = std::move(r.logits);
    out.out = r.stages.back().out;
    out.final_dec = std::move(r.stages.back().dec_feats);
    return out;
  }

  // One stage in isolation; `carry` supplies the previous stage's final
  // decoder features. With passes = 0 the sweep loop never runs and the
  // result is the input itself.
  StageForward<Var<T>> forward_stage(Tape<T>& tape, const Tensor<T>& x, int stage, int passes,
                                     const std::vector<Var<T>>* carry = nullptr,
                                     int carry_depth = 0) {
    ValueExec<T> ex(*this, tape);
    return run_stage(g_, ex, Var<T>::leaf(x, false), stage, passes, carry, carry_depth);
  }

  // Pruned inference: per-stage prediction layers are skipped entirely; the
  // only sigmoid evaluated is the one fusing stage logits.
  Tensor<T> predict(const Tensor<T>& image, PredictMode mode = PredictMode::fused,
                    std::vector<std::string>* trace = nullptr) {
    const bool was_training = train_;
    train_ = false;
    Tape<T> tape(false);
    tape.set_trace(trace);
    auto r = forward(tape, image);
    Var<T> prob = mode == PredictMode::fused ? fuse_stage_outputs(tape, r.logits)
                                             : ag::sigmoid(tape, r.logits.back());
    train_ = was_training;
    return prob.value();
  }

  // Equal-weight fusion: sigmoid of the elementwise sum of all stage logits.
  static Var<T> fuse_stage_outputs(Tape<T>& tape, const std::vector<Var<T>>& logits) {
    if (logits.empty()) throw ConfigError("fuse_stage_outputs: no stage outputs");
    Var<T> s = logits[0];
    for (size_t i = 1; i < logits.size(); ++i) s = ag::add(tape, s, logits[i]);
    return ag::sigmoid(tape, s);
  }

  // Learnable tensors of every node carrying the given stage tag (0 = all),
  // in node order.
  std::vector<ParamRef<T>> parameters(int stage = 0) {
    std::vector<ParamRef<T>> out;
    for (size_t i = 0; i < g_.nodes.size(); ++i) {
      const GraphNode& nd = g_.nodes[i];
      if (stage != 0 && !nd.stage_has(stage)) continue;
      out.push_back({nd.path + "/w", params_[i].w});
      out.push_back({nd.path + "/b", params_[i].b});
      if (nd.norm) {
        out.push_back({nd.path + "/bn/gamma", params_[i].gamma});
        out.push_back({nd.path + "/bn/beta", params_[i].beta});
      }
    }
    return out;
  }

  // Every stored tensor, learnable or not, in canonical (checkpoint) order.
  std::vector<NamedTensor<T>> named_tensors() {
    std::vector<NamedTensor<T>> out;
    for (size_t i = 0; i < g_.nodes.size(); ++i) {
      const GraphNode& nd = g_.nodes[i];
      out.push_back({nd.path + "/w", &params_[i].w.value(), true});
      out.push_back({nd.path + "/b", &params_[i].b.value(), true});
      if (nd.norm) {
        out.push_back({nd.path + "/bn/gamma", &params_[i].gamma.value(), true});
        out.push_back({nd.path + "/bn/beta", &params_[i].beta.value(), true});
        out.push_back({nd.path + "/bn/running_mean", &bn_mean_[i], false});
        out.push_back({nd.path + "/bn/running_var", &bn_var_[i], false});
      }
    }
    return out;
  }

  // Runtime oracle for the symbolic count: the number of learnable scalars
  // actually allocated.
  size_t enumerate_learnable() {
    size_t s = 0;
    for (const auto& p : parameters()) s += p.var.value().size();
    return s;
  }

  void zero_grad() {
    for (auto& p : parameters()) p.var.zero_grad();
  }

  // BN running statistics live in ops::BnState as flat vectors; expose them
  // as tensors for serialization without copying on every access.
  void sync_bn_out() {
    for (size_t i = 0; i < g_.nodes.size(); ++i) {
      if (!g_.nodes[i].norm) continue;
      const auto& st = params_[i].bn;
      const int c = static_cast<int>(st.running_mean.size());
      for (int k = 0; k < c; ++k) {
        bn_mean_[i].data[k] = st.running_mean[k];
        bn_var_[i].data[k] = st.running_var[k];
      }
    }
  }
  void sync_bn_in() {
    for (size_t i = 0; i < g_.nodes.size(); ++i) {
      if (!g_.nodes[i].norm) continue;
      auto& st = params_[i].bn;
      const int c = static_cast<int>(st.running_mean.size());
      for (int k = 0; k < c; ++k) {
        st.running_mean[k] = bn_mean_[i].data[k];
        st.running_var[k] = bn_var_[i].data[k];
      }
    }
  }

 private:
  void init_params(std::uint64_t seed) {
    params_.resize(g_.nodes.size());
    bn_mean_.resize(g_.nodes.size());
    bn_var_.resize(g_.nodes.size());
    for (size_t i = 0; i < g_.nodes.size(); ++i) {
      const GraphNode& nd = g_.nodes[i];
      Rng rng(hash_mix(seed, hash_str(nd.path)));
      Tensor<T> w(nd.cout, nd.cin, nd.kernel, nd.kernel);
      const double fan_in = double(nd.cin) * nd.kernel * nd.kernel;
      const double stdev = nd.norm ? std::sqrt(2.0 / fan_in) : std::sqrt(1.0 / fan_in);
      for (auto& v : w.data) v = T(stdev * rng.normal());
      params_[i].w = Var<T>::leaf(std::move(w), true);
      params_[i].b = Var<T>::leaf(Tensor<T>(nd.cout, 1, 1, 1, T(0)), true);
      if (nd.norm) {
        params_[i].gamma = Var<T>::leaf(Tensor<T>(nd.cout, 1, 1, 1, T(1)), true);
        params_[i].beta = Var<T>::leaf(Tensor<T>(nd.cout, 1, 1, 1, T(0)), true);
        params_[i].bn = ops::BnState<T>(nd.cout);
        bn_mean_[i] = Tensor<T>(nd.cout, 1, 1, 1, T(0));
        bn_var_[i] = Tensor<T>(nd.cout, 1, 1, 1, T(1));
      }
    }
  }

  ComputeGraph g_;
  std::vector<NodeParams<T>> params_;
  std::vector<Tensor<T>> bn_mean_, bn_var_;
  bool train_ = false;
};

template <typename T>
typename ValueExec<T>::V ValueExec<T>::unit(int idx, const V& in) {
  const GraphNode& nd = model_->graph().node(idx);
  NodeParams<T>& pp = model_->params(idx);
  V out = ag::conv2d(*tape_, in, pp.w, pp.b, nd.path);
  if (nd.norm) {
    out = ag::batchnorm(*tape_, out, pp.gamma, pp.beta, pp.bn, model_->training(),
                        nd.path + "/bn");
    out = ag::relu(*tape_, out);
  }
  return out;
}

// Forward-skip fusion: encoder-derived channels first, decoder-derived after.
template <typename T>
Var<T> fuse_forward_skip(Tape<T>& tape, const Var<T>& enc_feature, const Var<T>& up_feature) {
  return ag::concat(tape, enc_feature, up_feature, "encoder feature", "decoder feature");
}

}  // namespace plnet
