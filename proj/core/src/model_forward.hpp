// Builds the training graph on a Tape. Shared by the float training path
// and the double-precision finite-difference checker, so both run exactly
// the same math.
#pragma once

#include <map>
#include <vector>

#include "dolphin/model.hpp"
#include "dolphin/tensor.hpp"

namespace dolphin::detail {

// Canonical parameter creation order; map iteration is name-sorted, so the
// initializer walks this list instead to stay reproducible.
std::vector<std::string> param_order(const ModelConfig& cfg);
std::map<std::string, std::pair<int, int>> param_shapes(const ModelConfig& cfg);

// Window partition of a g x g row-major grid with optional cyclic shift:
// result[k] = source row for partitioned row k, windows in raster order.
std::vector<int> window_partition_index(int g, int ws, int shift);
std::vector<int> inverse_index(const std::vector<int>& idx);
std::vector<std::array<int, 4>> merge_index(int g);

// Additive attention masks for shifted windows (one per window, ws^2 x ws^2);
// empty when shift == 0.
template <typename S>
std::vector<nn::Mat<S>> shift_masks(int g, int ws, int shift) {
  std::vector<nn::Mat<S>> masks;
  if (shift == 0) return masks;
  auto region = [&](int i) { return i < g - ws ? 0 : (i < g - shift ? 1 : 2); };
  const int nw = g / ws;
  masks.reserve(size_t(nw) * size_t(nw));
  std::vector<int> rid(size_t(ws) * size_t(ws));
  for (int wy = 0; wy < nw; ++wy)
    for (int wx = 0; wx < nw; ++wx) {
      for (int dy = 0; dy < ws; ++dy)
        for (int dx = 0; dx < ws; ++dx)
          rid[size_t(dy * ws + dx)] = region(wy * ws + dy) * 3 + region(wx * ws + dx);
      nn::Mat<S> m = nn::Mat<S>::Zero(ws * ws, ws * ws);
      for (int a = 0; a < ws * ws; ++a)
        for (int b = 0; b < ws * ws; ++b)
          if (rid[size_t(a)] != rid[size_t(b)]) m(a, b) = S(-1e4);
      masks.push_back(std::move(m));
    }
  return masks;
}

// Image -> normalized patch rows, n_patches x patch^2, raster order.
template <typename S>
nn::Mat<S> patch_rows(const PageImage& frame, int patch) {
  const int g = frame.width / patch;
  nn::Mat<S> x(g * g, patch * patch);
  for (int py = 0; py < g; ++py)
    for (int px = 0; px < g; ++px)
      for (int dy = 0; dy < patch; ++dy)
        for (int dx = 0; dx < patch; ++dx)
          x(py * g + px, dy * patch + dx) =
              S(frame.at(px * patch + dx, py * patch + dy, 0)) / S(127.5) - S(1);
  return x;
}

template <typename S>
using Ref = typename nn::Tape<S>::Ref;

template <typename S>
struct ParamRefs {
  std::map<std::string, Ref<S>> refs;
  Ref<S> operator()(const std::string& name) const {
    auto it = refs.find(name);
    if (it == refs.end()) throw std::logic_error("missing parameter: " + name);
    return it->second;
  }
};

template <typename S>
ParamRefs<S> make_param_refs(nn::Tape<S>& t, const Params<S>& params) {
  ParamRefs<S> p;
  for (const auto& [name, value] : params) p.refs[name] = t.leaf(value);
  return p;
}

// Encoder forward for one frame; returns the n_mem x final_dim memory.
template <typename S>
Ref<S> encode_on_tape(nn::Tape<S>& t, const ModelConfig& cfg, const ParamRefs<S>& P,
                      const PageImage& frame) {
  if (frame.channels != 1 || frame.width != cfg.frame_size || frame.height != cfg.frame_size)
    throw ShapeMismatch("encoder expects a grayscale frame of size " +
                        std::to_string(cfg.frame_size));
  Ref<S> x = t.leaf(patch_rows<S>(frame, cfg.patch_size));
  Ref<S> h = t.add(t.linear(x, P("enc.patch_embed.w"), P("enc.patch_embed.b")), P("enc.pos"));

  for (int s = 0; s < cfg.num_stages(); ++s) {
    const int g = cfg.grid_size(s);
    const int ws = cfg.window_size;
    const int heads = cfg.stage_heads[size_t(s)];
    const std::string sp = "enc.s" + std::to_string(s) + ".";
    for (int b = 0; b < cfg.stage_depths[size_t(s)]; ++b) {
      const std::string bp = sp + "b" + std::to_string(b) + ".";
      const int shift = (b % 2 == 1) ? ws / 2 : 0;
      const auto idx = window_partition_index(g, ws, shift);
      const auto inv = inverse_index(idx);
      auto masks = shift_masks<S>(g, ws, shift);
      std::vector<const nn::Mat<S>*> mask_ptrs;
      for (const auto& m : masks) mask_ptrs.push_back(&m);
      const std::vector<int> blocks(size_t(g / ws) * size_t(g / ws), ws * ws);

      Ref<S> hw = t.gather_rows(h, idx);
      Ref<S> n1 = t.layernorm(hw, P(bp + "ln1.g"), P(bp + "ln1.b"));
      Ref<S> a = t.block_attention(
          t.linear(n1, P(bp + "attn.wq"), P(bp + "attn.bq")),
          t.linear(n1, P(bp + "attn.wk"), P(bp + "attn.bk")),
          t.linear(n1, P(bp + "attn.wv"), P(bp + "attn.bv")), blocks, blocks,
          heads, false, masks.empty() ? std::vector<const nn::Mat<S>*>{} : mask_ptrs);
      hw = t.add(hw, t.linear(a, P(bp + "attn.wo"), P(bp + "attn.bo")));
      Ref<S> n2 = t.layernorm(hw, P(bp + "ln2.g"), P(bp + "ln2.b"));
      Ref<S> m = t.linear(t.gelu(t.linear(n2, P(bp + "mlp.w1"), P(bp + "mlp.b1"))),
                          P(bp + "mlp.w2"), P(bp + "mlp.b2"));
      hw = t.add(hw, m);
      h = t.gather_rows(hw, inv);
    }
    if (s + 1 < cfg.num_stages()) {
      const std::string mp = "enc.merge" + std::to_string(s) + ".";
      Ref<S> hm = t.gather_rows_concat4(h, merge_index(g));
      h = t.linear(t.layernorm(hm, P(mp + "ln.g"), P(mp + "ln.b")), P(mp + "w"), P(mp + "b"));
    }
  }
  return t.layernorm(h, P("enc.final_ln.g"), P("enc.final_ln.b"));
}

// Decoder forward over flattened sample rows; memories concatenated in the
// same order. Returns logits (sum of lengths x vocab).
template <typename S>
Ref<S> decode_on_tape(nn::Tape<S>& t, const ModelConfig& cfg, const ParamRefs<S>& P,
                      const std::vector<std::vector<TokenId>>& seqs, Ref<S> memory_cat,
                      const std::vector<int>& mem_blocks) {
  std::vector<int> tok_idx, pos_idx, lens;
  for (const auto& ids : seqs) {
    if (int(ids.size()) > cfg.max_seq_len)
      throw ShapeMismatch("sequence longer than max_seq_len");
    lens.push_back(int(ids.size()));
    for (size_t i = 0; i < ids.size(); ++i) {
      tok_idx.push_back(int(ids[i]));
      pos_idx.push_back(int(i));
    }
  }

  Ref<S> x = t.add(t.gather_rows(P("dec.tok_embed"), tok_idx),
                   t.gather_rows(P("dec.pos"), pos_idx));
  Ref<S> md = t.linear(memory_cat, P("dec.mem_proj.w"), P("dec.mem_proj.b"));
  const int heads = cfg.decoder_heads;

  for (int l = 0; l < cfg.decoder_layers; ++l) {
    const std::string lp = "dec.l" + std::to_string(l) + ".";
    Ref<S> n1 = t.layernorm(x, P(lp + "ln1.g"), P(lp + "ln1.b"));
    Ref<S> a = t.block_attention(
        t.linear(n1, P(lp + "self.wq"), P(lp + "self.bq")),
        t.linear(n1, P(lp + "self.wk"), P(lp + "self.bk")),
        t.linear(n1, P(lp + "self.wv"), P(lp + "self.bv")), lens, lens, heads, true);
    x = t.add(x, t.linear(a, P(lp + "self.wo"), P(lp + "self.bo")));

    Ref<S> n2 = t.layernorm(x, P(lp + "ln2.g"), P(lp + "ln2.b"));
    Ref<S> c = t.block_attention(
        t.linear(n2, P(lp + "cross.wq"), P(lp + "cross.bq")),
        t.linear(md, P(lp + "cross.wk"), P(lp + "cross.bk")),
        t.linear(md, P(lp + "cross.wv"), P(lp + "cross.bv")), lens, mem_blocks,
        heads, false);
    x = t.add(x, t.linear(c, P(lp + "cross.wo"), P(lp + "cross.bo")));

    Ref<S> n3 = t.layernorm(x, P(lp + "ln3.g"), P(lp + "ln3.b"));
    Ref<S> m = t.linear(t.gelu(t.linear(n3, P(lp + "mlp.w1"), P(lp + "mlp.b1"))),
                        P(lp + "mlp.w2"), P(lp + "mlp.b2"));
    x = t.add(x, m);
  }
  x = t.layernorm(x, P("dec.final_ln.g"), P("dec.final_ln.b"));
  return t.linear(x, P("dec.out.w"), P("dec.out.b"));
}

template <typename S>
struct BatchGraph {
  Ref<S> logits = nullptr;
  Ref<S> loss = nullptr;
};

// Full graph: per-sample encoder, batched decoder, masked next-token loss.
// Prompt positions (up to and excluding SEP) and PAD targets carry weight 0.
template <typename S>
BatchGraph<S> build_graph(nn::Tape<S>& t, const ModelConfig& cfg, const ParamRefs<S>& P,
                          const std::vector<TrainSample>& batch) {
  if (batch.empty()) throw ShapeMismatch("empty batch");
  Ref<S> mem = nullptr;
  std::vector<int> mem_blocks;
  std::vector<std::vector<TokenId>> seqs;
  for (const auto& s : batch) {
    Ref<S> m = encode_on_tape(t, cfg, P, s.frame);
    mem = mem ? t.concat_rows(mem, m) : m;
    mem_blocks.push_back(int(m->value.rows()));
    seqs.push_back(s.ids);
  }
  BatchGraph<S> g;
  g.logits = decode_on_tape(t, cfg, P, seqs, mem, mem_blocks);

  std::vector<int> targets;
  std::vector<S> weights;
  for (const auto& s : batch) {
    const int n = int(s.ids.size());
    for (int i = 0; i < n; ++i) {
      const bool last = i == n - 1;
      const TokenId next = last ? kPad : s.ids[size_t(i) + 1];
      targets.push_back(int(next));
      const bool active = !last && i >= s.sep_pos && next != kPad;
      weights.push_back(active ? S(1) : S(0));
    }
  }
  g.loss = t.cross_entropy(g.logits, std::move(targets), std::move(weights));
  return g;
}

}  // namespace dolphin::detail
