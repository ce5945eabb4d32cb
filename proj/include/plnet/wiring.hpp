#pragma once

// The unrolled forward walk, written once and shared by the symbolic shape
// executor and the numeric runtime so the two can never drift apart.
//
// Per stage: `passes` full encoder-decoder sweeps. Pass 1 consumes the stage
// input; pass i >= 2 consumes the previous pass's full-resolution output.
// Encoder levels concatenate a backward-skip branch with the level input
// (pass 1 of stage 1 duplicates the input; pass 1 of a later stage adapts the
// previous stage's final decoder feature at the same level; later passes
// adapt the previous pass's decoder feature, taken raw at level 1 where the
// widths already match; bottlenecks always duplicate). Decoder levels
// concatenate the encoder output with the upsampled-and-convolved feature
// from below. The per-stage head maps the final full-resolution feature to
// logits.

#include <vector>

#include "plnet/graph.hpp"

namespace plnet {

template <class V>
struct StageForward {
  V out;                     // final pass full-resolution feature
  V logits;                  // head output; meaningful only when has_logits
  bool has_logits = false;
  std::vector<V> dec_feats;  // final pass decoder features, indexed by level
};

template <class V>
struct NetForward {
  std::vector<V> logits;          // one per executed stage
  std::vector<StageForward<V>> stages;
};

template <class Ex>
StageForward<typename Ex::V> run_stage(const ComputeGraph& g, Ex& ex, typename Ex::V input,
                                       int stage, int passes,
                                       const std::vector<typename Ex::V>* carry,
                                       int carry_depth) {
  using V = typename Ex::V;
  const int depth = g.cfg.stage_depth(stage);
  std::vector<V> prev_dec;
  V x_prev = input;
  for (int pass = 1; pass <= passes; ++pass) {
    const int step = pass <= g.cfg.steps ? pass : g.cfg.steps;
    std::vector<V> enc(depth + 1);
    for (int l = 1; l <= depth; ++l) {
      V xin = l == 1 ? x_prev : ex.pool(enc[l - 1]);
      V bwd;
      if (pass >= 2 && l <= depth - 1) {
        bwd = l == 1 ? prev_dec[1] : ex.unit(g.bwd_proj[l], prev_dec[l]);
      } else if (pass == 1 && carry != nullptr && l <= carry_depth - 1) {
        bwd = ex.unit(g.bwd_proj[l], (*carry)[l]);
      } else {
        bwd = xin;
      }
      ex.probe_bsc(stage, pass, l, bwd, xin);
      V fused = ex.concat(bwd, xin);
      enc[l] = ex.unit(g.enc_refine[l], ex.unit(g.enc_fuse[l][step], fused));
    }
    std::vector<V> dec(depth);
    V below = enc[depth];
    for (int l = depth - 1; l >= 1; --l) {
      V up = ex.unit(g.dec_up[l], ex.upsample(below));
      V fsc = ex.concat(enc[l], up);  // [encoder-derived, decoder-derived]
      dec[l] = ex.unit(g.dec_refine[l], ex.unit(g.dec_fuse[l][step], fsc));
      below = dec[l];
    }
    prev_dec = std::move(dec);
    x_prev = prev_dec[1];
  }
  StageForward<V> out;
  out.out = x_prev;
  out.dec_feats = std::move(prev_dec);
  if (passes >= 1) {
    out.logits = ex.unit(g.heads[stage], out.out);
    out.has_logits = true;
  }
  return out;
}

template <class Ex>
NetForward<typename Ex::V> run_unet(const ComputeGraph& g, Ex& ex, typename Ex::V input) {
  using V = typename Ex::V;
  const int D = 5;
  std::vector<V> enc(D + 1);
  for (int l = 1; l <= D; ++l) {
    V xin = l == 1 ? input : ex.pool(enc[l - 1]);
    enc[l] = ex.unit(g.enc_conv[l][2], ex.unit(g.enc_conv[l][1], xin));
  }
  V below = enc[D];
  for (int l = D - 1; l >= 1; --l) {
    V up = ex.unit(g.up_proj[l], ex.upsample(below));
    V f = ex.concat(enc[l], up);
    below = ex.unit(g.dec_conv[l][2], ex.unit(g.dec_conv[l][1], f));
  }
  NetForward<V> r;
  StageForward<V> sf;
  sf.out = below;
  sf.logits = ex.unit(g.heads[1], below);
  sf.has_logits = true;
  r.logits.push_back(sf.logits);
  r.stages.push_back(std::move(sf));
  return r;
}

// stages_to_run/passes of -1 mean "as configured". Every stage sees the same
// input; the carry between stages is the previous stage's final decoder
// feature set.
template <class Ex>
NetForward<typename Ex::V> run_network(const ComputeGraph& g, Ex& ex, typename Ex::V input,
                                       int stages_to_run = -1, int passes = -1) {
  if (g.cfg.variant == Variant::unet) return run_unet(g, ex, input);
  const int S = stages_to_run < 0 ? g.cfg.num_stages() : stages_to_run;
  const int P = passes < 0 ? g.cfg.steps : passes;
  NetForward<typename Ex::V> r;
  std::vector<typename Ex::V> carry;
  int carry_depth = 0;
  for (int s = 1; s <= S; ++s) {
    auto sf = run_stage(g, ex, input, s, P, s >= 2 ? &carry : nullptr, carry_depth);
    if (sf.has_logits) r.logits.push_back(sf.logits);
    carry = sf.dec_feats;
    carry_depth = g.cfg.stage_depth(s);
    r.stages.push_back(std::move(sf));
  }
  return r;
}

// ------------------------------------------------------ shape propagation ---

struct ShapeInfo {
  int n = 0, c = 0, h = 0, w = 0;
  std::string producer;
};

struct ShapeReport {
  // node index -> shapes; absent entries were never applied
  std::vector<ShapeInfo> node_in, node_out;
  std::vector<bool> applied;
  std::vector<std::string> mismatches;
  std::vector<ShapeInfo> head_out;  // per executed stage
};

class ShapeExec {
 public:
  using V = ShapeInfo;

  explicit ShapeExec(const ComputeGraph& g) : g_(&g) {
    report_.node_in.resize(g.nodes.size());
    report_.node_out.resize(g.nodes.size());
    report_.applied.assign(g.nodes.size(), false);
  }

  V unit(int idx, const V& in) {
    const GraphNode& nd = g_->node(idx);
    if (in.c != nd.cin) {
      report_.mismatches.push_back(nd.path + ": expects " + std::to_string(nd.cin) +
                                   " input channels, got " + std::to_string(in.c) + " from " +
                                   in.producer);
    }
    if (!report_.applied[idx]) {
      report_.node_in[idx] = in;
      report_.node_out[idx] = {in.n, nd.cout, in.h, in.w, nd.path};
      report_.applied[idx] = true;
    } else if (report_.node_in[idx].h != in.h || report_.node_in[idx].w != in.w) {
      report_.mismatches.push_back(nd.path + ": applied at " + std::to_string(in.h) + "x" +
                                   std::to_string(in.w) + " and " +
                                   std::to_string(report_.node_in[idx].h) + "x" +
                                   std::to_string(report_.node_in[idx].w));
    }
    return {in.n, nd.cout, in.h, in.w, nd.path};
  }

  V pool(const V& in) {
    if (in.h % 2 != 0 || in.w % 2 != 0) {
      report_.mismatches.push_back("pool after " + in.producer + ": odd spatial dims " +
                                   std::to_string(in.h) + "x" + std::to_string(in.w));
    }
    return {in.n, in.c, in.h / 2, in.w / 2, in.producer + "+pool"};
  }

  V upsample(const V& in) { return {in.n, in.c, in.h * 2, in.w * 2, in.producer + "+up"}; }

  V concat(const V& a, const V& b) {
    if (a.h != b.h || a.w != b.w) {
      report_.mismatches.push_back("concat: spatial mismatch between " + a.producer + " (" +
                                   std::to_string(a.h) + "x" + std::to_string(a.w) + ") and " +
                                   b.producer + " (" + std::to_string(b.h) + "x" +
                                   std::to_string(b.w) + ")");
    }
    return {a.n, a.c + b.c, a.h, a.w, "[" + a.producer + "|" + b.producer + "]"};
  }

  void probe_bsc(int, int, int, const V&, const V&) {}

  ShapeReport take_report() { return std::move(report_); }

 private:
  const ComputeGraph* g_;
  ShapeReport report_;
};

// Walks the full unrolled wiring symbolically and annotates every node with
// its input/output shape. Mismatches name both producer and consumer.
inline ShapeReport propagate_shapes(const ComputeGraph& g, int batch = 1, int size = -1) {
  ShapeExec ex(g);
  ShapeInfo in{batch, g.cfg.in_channels, size < 0 ? g.cfg.input_size : size,
               size < 0 ? g.cfg.input_size : size, "input"};
  auto r = run_network(g, ex, in);
  auto report = ex.take_report();
  for (const auto& lg : r.logits) report.head_out.push_back(lg);
  return report;
}

inline void validate_shapes(const ComputeGraph& g) {
  auto rep = propagate_shapes(g);
  if (!rep.mismatches.empty()) {
    std::string msg = "graph validation failed:";
    for (const auto& m : rep.mismatches) msg += "\n  " + m;
    throw ConfigError(msg);
  }
}

}  // namespace plnet
