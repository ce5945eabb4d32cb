#pragma once

// Symbolic network description: a table of named parameterized nodes (convs
// with optional normalization) plus index maps the wiring walk uses to pick
// the node for each junction. Nodes tagged with several stages are physically
// shared; the unrolled wiring duplicates applications, never parameters.

#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "plnet/config.hpp"

namespace plnet {

enum class NodeRole {
  enc_fuse,    // per-step encoder conv over the backward-skip concat
  enc_refine,  // step-shared encoder conv
  bwd_proj,    // 1x1 adapter mapping a decoder feature onto the level input width
  dec_up,      // step-shared conv after bilinear upsampling
  dec_fuse,    // per-step decoder conv over the forward-skip concat
  dec_refine,  // step-shared decoder conv
  enc_conv,    // baseline encoder conv
  up_proj,     // baseline 1x1 up-path adapter
  dec_conv,    // baseline decoder conv
  head,        // per-stage 1x1 logit conv
};

inline const char* to_string(NodeRole r) {
  switch (r) {
    case NodeRole::enc_fuse: return "enc_fuse";
    case NodeRole::enc_refine: return "enc_refine";
    case NodeRole::bwd_proj: return "bwd_proj";
    case NodeRole::dec_up: return "dec_up";
    case NodeRole::dec_fuse: return "dec_fuse";
    case NodeRole::dec_refine: return "dec_refine";
    case NodeRole::enc_conv: return "enc_conv";
    case NodeRole::up_proj: return "up_proj";
    case NodeRole::dec_conv: return "dec_conv";
    case NodeRole::head: return "head";
  }
  return "?";
}

struct GraphNode {
  std::string path;
  NodeRole role = NodeRole::enc_conv;
  int kernel = 3;
  int cin = 0, cout = 0;
  bool norm = false;  // conv+BN+ReLU unit when true; bare conv otherwise
  int level = 0;      // 1-based encoder/decoder level
  int step = 0;       // 0 = shared across steps
  unsigned stage_mask = 0;  // bit s-1 set when stage s applies this node

  size_t conv_params() const {
    return static_cast<size_t>(cin) * cout * kernel * kernel + cout;
  }
  size_t norm_params() const { return norm ? 2 * static_cast<size_t>(cout) : 0; }
  size_t param_count() const { return conv_params() + norm_params(); }

  bool stage_has(int stage) const { return (stage_mask >> (stage - 1)) & 1u; }
};

struct ComputeGraph {
  NetworkConfig cfg;
  std::vector<GraphNode> nodes;

  // Index maps; -1 marks an absent node. Levels are 1-based, steps 1-based.
  std::vector<std::vector<int>> enc_fuse;    // [level][step]
  std::vector<int> enc_refine;               // [level]
  std::vector<int> bwd_proj;                 // [level]
  std::vector<int> dec_up;                   // [level]
  std::vector<std::vector<int>> dec_fuse;    // [level][step]
  std::vector<int> dec_refine;               // [level]
  std::vector<std::vector<int>> enc_conv;    // [level][j], baseline
  std::vector<int> up_proj;                  // [level], baseline
  std::vector<std::vector<int>> dec_conv;    // [level][j], baseline
  std::vector<int> heads;                    // [stage]

  const GraphNode& node(int idx) const { return nodes[idx]; }
  GraphNode& node(int idx) { return nodes[idx]; }

  int find(const std::string& path) const {
    for (size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i].path == path) return static_cast<int>(i);
    }
    return -1;
  }

  size_t total_params() const {
    size_t s = 0;
    for (const auto& n : nodes) s += n.param_count();
    return s;
  }
};

namespace detail {

inline int add_node(ComputeGraph& g, std::string path, NodeRole role, int kernel, int cin,
                    int cout, bool norm, int level, int step, unsigned stage_mask) {
  GraphNode n;
  n.path = std::move(path);
  n.role = role;
  n.kernel = kernel;
  n.cin = cin;
  n.cout = cout;
  n.norm = norm;
  n.level = level;
  n.step = step;
  n.stage_mask = stage_mask;
  if (kernel != 1 && kernel != 3) throw ConfigError(n.path + ": kernel must be 1 or 3");
  g.nodes.push_back(std::move(n));
  return static_cast<int>(g.nodes.size()) - 1;
}

}  // namespace detail

// Progressive network. Per encoder level: one fusion conv per step taking the
// doubled backward-skip concat, then a step-shared refine conv. Per decoder
// level: a step-shared conv after bilinear upsampling, one fusion conv per
// step taking the forward-skip concat, then a step-shared refine conv.
// Backward-skip features are adapted onto the level input width by 1x1
// projections. Levels up to each stage's depth carry that stage's tag; a
// single parameter set serves every stage and pass that reaches the node.
inline ComputeGraph build_plnet(const NetworkConfig& cfg) {
  if (cfg.variant != Variant::plnet) throw ConfigError("build_plnet: config variant is not plnet");
  cfg.validate();
  ComputeGraph g;
  g.cfg = cfg;
  const int D = cfg.max_depth();
  const int S = cfg.num_stages();
  const int n = cfg.steps;

  auto levels_of_stage = [&](int s) { return cfg.stage_depth(s); };
  auto enc_stage_mask = [&](int level) {
    unsigned m = 0;
    for (int s = 1; s <= S; ++s) {
      if (level <= levels_of_stage(s)) m |= 1u << (s - 1);
    }
    return m;
  };
  auto dec_stage_mask = [&](int level) {
    unsigned m = 0;
    for (int s = 1; s <= S; ++s) {
      if (level <= levels_of_stage(s) - 1) m |= 1u << (s - 1);
    }
    return m;
  };
  // A projection at level l serves passes >= 2 of any stage whose decoder
  // reaches l, and pass 1 of any stage consuming the previous stage's carry.
  auto proj_stage_mask = [&](int level) {
    unsigned m = 0;
    for (int s = 1; s <= S; ++s) {
      if (n >= 2 && level >= 2 && level <= levels_of_stage(s) - 1) m |= 1u << (s - 1);
      if (s >= 2 && level <= levels_of_stage(s - 1) - 1) m |= 1u << (s - 1);
    }
    return m;
  };

  auto C = [&](int level) { return cfg.channels_at(level); };
  auto level_in = [&](int level) { return level == 1 ? cfg.in_channels : C(level - 1); };

  g.enc_fuse.assign(D + 1, std::vector<int>(n + 1, -1));
  g.enc_refine.assign(D + 1, -1);
  g.bwd_proj.assign(D + 1, -1);
  g.dec_up.assign(D + 1, -1);
  g.dec_fuse.assign(D + 1, std::vector<int>(n + 1, -1));
  g.dec_refine.assign(D + 1, -1);
  g.heads.assign(S + 1, -1);

  for (int l = 1; l <= D; ++l) {
    const unsigned em = enc_stage_mask(l);
    for (int i = 1; i <= n; ++i) {
      // Pass 1 at level 1 fuses the duplicated input image; later passes fuse
      // the previous pass's full-resolution output, so the width differs.
      const int cin = 2 * (l == 1 && i == 1 ? cfg.in_channels : (l == 1 ? C(1) : C(l - 1)));
      g.enc_fuse[l][i] =
          detail::add_node(g, "enc/L" + std::to_string(l) + "/step" + std::to_string(i) + "/fuse",
                           NodeRole::enc_fuse, 3, cin, C(l), true, l, i, em);
    }
    g.enc_refine[l] = detail::add_node(g, "enc/L" + std::to_string(l) + "/refine",
                                       NodeRole::enc_refine, 3, C(l), C(l), true, l, 0, em);
    const unsigned pm = proj_stage_mask(l);
    if (pm != 0) {
      g.bwd_proj[l] = detail::add_node(g, "enc/L" + std::to_string(l) + "/bwd_proj",
                                       NodeRole::bwd_proj, 1, C(l), level_in(l), false, l, 0, pm);
    }
  }
  for (int l = D - 1; l >= 1; --l) {
    const unsigned dm = dec_stage_mask(l);
    g.dec_up[l] = detail::add_node(g, "dec/L" + std::to_string(l) + "/up", NodeRole::dec_up, 3,
                                   C(l + 1), C(l), true, l, 0, dm);
    for (int i = 1; i <= n; ++i) {
      g.dec_fuse[l][i] =
          detail::add_node(g, "dec/L" + std::to_string(l) + "/step" + std::to_string(i) + "/fuse",
                           NodeRole::dec_fuse, 3, 2 * C(l), C(l), true, l, i, dm);
    }
    g.dec_refine[l] = detail::add_node(g, "dec/L" + std::to_string(l) + "/refine",
                                       NodeRole::dec_refine, 3, C(l), C(l), true, l, 0, dm);
  }
  for (int s = 1; s <= S; ++s) {
    g.heads[s] = detail::add_node(g, "head/stage" + std::to_string(s), NodeRole::head, 1, C(1),
                                  cfg.out_channels, false, 1, 0, 1u << (s - 1));
  }
  return g;
}

// Classic 5-level baseline: two 3x3 convs per level, channels doubling from
// 2*base_channels*ocs, bilinear upsampling with a 1x1 channel adapter, skip
// concatenation, single head.
inline ComputeGraph build_unet(const NetworkConfig& cfg) {
  if (cfg.variant != Variant::unet) throw ConfigError("build_unet: config variant is not unet");
  cfg.validate();
  ComputeGraph g;
  g.cfg = cfg;
  const int D = 5;
  auto C = [&](int level) { return cfg.channels_at(level); };

  g.enc_conv.assign(D + 1, std::vector<int>(3, -1));
  g.up_proj.assign(D + 1, -1);
  g.dec_conv.assign(D + 1, std::vector<int>(3, -1));
  g.heads.assign(2, -1);

  for (int l = 1; l <= D; ++l) {
    const int cin = l == 1 ? cfg.in_channels : C(l - 1);
    g.enc_conv[l][1] = detail::add_node(g, "enc/L" + std::to_string(l) + "/conv1",
                                        NodeRole::enc_conv, 3, cin, C(l), true, l, 0, 1u);
    g.enc_conv[l][2] = detail::add_node(g, "enc/L" + std::to_string(l) + "/conv2",
                                        NodeRole::enc_conv, 3, C(l), C(l), true, l, 0, 1u);
  }
  for (int l = D - 1; l >= 1; --l) {
    g.up_proj[l] = detail::add_node(g, "dec/L" + std::to_string(l) + "/up_proj", NodeRole::up_proj,
                                    1, C(l + 1), C(l), false, l, 0, 1u);
    g.dec_conv[l][1] = detail::add_node(g, "dec/L" + std::to_string(l) + "/conv1",
                                        NodeRole::dec_conv, 3, 2 * C(l), C(l), true, l, 0, 1u);
    g.dec_conv[l][2] = detail::add_node(g, "dec/L" + std::to_string(l) + "/conv2",
                                        NodeRole::dec_conv, 3, C(l), C(l), true, l, 0, 1u);
  }
  g.heads[1] = detail::add_node(g, "head/stage1", NodeRole::head, 1, C(1), cfg.out_channels,
                                false, 1, 0, 1u);
  return g;
}

inline ComputeGraph build_network(const NetworkConfig& cfg) {
  return cfg.variant == Variant::plnet ? build_plnet(cfg) : build_unet(cfg);
}

// ------------------------------------------------------------- accounting ---

struct ParamReport {
  std::vector<std::pair<std::string, size_t>> per_node;
  size_t encoder = 0, decoder = 0, heads = 0;
  std::map<int, size_t> per_step;          // step tag -> params (0 = step-shared)
  std::map<int, size_t> stage_exclusive;   // stage -> params used by that stage only
  size_t shared_all_stages = 0;
  size_t total = 0;
  size_t bytes_estimate() const { return total * 4; }
};

inline ParamReport count_parameters(const ComputeGraph& g) {
  ParamReport r;
  const unsigned full_mask = [&] {
    unsigned m = 0;
    for (const auto& n : g.nodes) m |= n.stage_mask;
    return m;
  }();
  for (const auto& n : g.nodes) {
    const size_t p = n.param_count();
    r.per_node.emplace_back(n.path, p);
    r.total += p;
    if (n.role == NodeRole::head) {
      r.heads += p;
    } else if (n.path.rfind("enc/", 0) == 0) {
      r.encoder += p;
    } else {
      r.decoder += p;
    }
    r.per_step[n.step] += p;
    bool exclusive = false;
    for (int s = 1; s <= 8; ++s) {
      if (n.stage_mask == (1u << (s - 1))) {
        r.stage_exclusive[s] += p;
        exclusive = true;
      }
    }
    if (!exclusive && n.stage_mask == full_mask) r.shared_all_stages += p;
  }
  return r;
}

// One node per line: path, op, in/out channels, kernel, param count, tags.
inline std::string describe(const ComputeGraph& g) {
  std::ostringstream os;
  os << "variant=" << to_string(g.cfg.variant) << " input=" << g.cfg.input_size
     << " ocs=" << g.cfg.ocs << " steps=" << g.cfg.steps << " depths=" << g.cfg.depths_str()
     << "\n";
  for (const auto& n : g.nodes) {
    os << std::left << std::setw(26) << n.path << " " << std::setw(10) << to_string(n.role)
       << " k=" << n.kernel << " " << std::setw(4) << n.cin << "->" << std::setw(4) << n.cout
       << (n.norm ? " bn+relu" : "        ") << " params=" << std::setw(9) << n.param_count()
       << " step=" << n.step << " stages=";
    bool first = true;
    for (int s = 1; s <= 8; ++s) {
      if (n.stage_has(s)) {
        if (!first) os << ",";
        os << s;
        first = false;
      }
    }
    os << "\n";
  }
  const ParamReport r = count_parameters(g);
  os << "total_params=" << r.total << " size_bytes=" << r.bytes_estimate() << "\n";
  return os.str();
}

}  // namespace plnet
