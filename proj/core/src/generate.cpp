// Greedy decoding with KV caches. Batched decode runs items in lockstep and
// is bit-identical to decoding each item alone: every weight projection uses
// a matmul whose per-row arithmetic order does not depend on the batch size,
// and all attention work is per item with batch-independent shapes.
#include <cmath>

#include "dolphin/model.hpp"
#include "model_forward.hpp"

namespace dolphin {

namespace {

using nn::MatF;

// out.row(i) = x.row(i) * w, accumulated over k in a fixed order so the
// result for a given row is the same no matter how many rows are present.
MatF rowmm(const MatF& x, const MatF& w) {
  MatF out = MatF::Zero(x.rows(), w.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index k = 0; k < x.cols(); ++k)
      out.row(i) += x(i, k) * w.row(k);
  return out;
}

MatF linear_det(const MatF& x, const MatF& w, const MatF& b) {
  MatF out = rowmm(x, w);
  out.rowwise() += b.row(0);
  return out;
}

MatF layernorm_rows(const MatF& x, const MatF& g, const MatF& b) {
  MatF out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const float mu = x.row(i).mean();
    const float var = (x.row(i).array() - mu).square().mean();
    const float is = 1.0f / std::sqrt(var + 1e-5f);
    out.row(i) = ((x.row(i).array() - mu) * is).matrix().cwiseProduct(g.row(0)) + b.row(0);
  }
  return out;
}

void gelu_inplace(MatF& x) {
  constexpr float kC = 0.7978845608028654f;
  x = x.unaryExpr([](float v) {
    const float u = kC * (v + 0.044715f * v * v * v);
    return 0.5f * v * (1.0f + std::tanh(u));
  });
}

void softmax_col(Eigen::Ref<Eigen::VectorXf> v) {
  const float mx = v.maxCoeff();
  v = (v.array() - mx).exp();
  v /= v.sum();
}

struct LayerCache {
  MatF k, v;    // self-attention cache, grows one row per step
  MatF ck, cv;  // cross-attention keys/values over the memory, fixed
};

struct ItemState {
  std::vector<TokenId> seq;  // prefix, then generated tokens
  size_t prefix_len = 0;
  std::vector<LayerCache> layers;
  std::vector<TokenId> out_ids;
  bool done = false;
  bool truncated = false;
};

int argmax_row(const MatF& m, Eigen::Index row) {
  int best = 0;
  for (Eigen::Index j = 1; j < m.cols(); ++j)
    if (m(row, j) > m(row, best)) best = int(j);
  return best;
}

}  // namespace

GenResult Model::generate(const Prompt& prompt, const VisualFeatures& mem,
                          int max_len) const {
  return generate_batch({&mem}, {prompt}, max_len).front();
}

std::vector<GenResult> Model::generate_batch(
    const std::vector<const VisualFeatures*>& mems,
    const std::vector<Prompt>& prompts, int max_len) const {
  if (mems.size() != prompts.size())
    throw ShapeMismatch("generate_batch: mems/prompts size mismatch");
  if (mems.empty()) return {};
  const int cap = max_len > 0 ? std::min(max_len, cfg_.max_seq_len) : cfg_.max_seq_len;
  const auto& P = params_;
  const int d = cfg_.decoder_dim;
  const int heads = cfg_.decoder_heads;
  const int dh = d / heads;
  const float inv_sqrt = 1.0f / std::sqrt(float(dh));

  std::vector<ItemState> items(mems.size());
  for (size_t i = 0; i < mems.size(); ++i) {
    const MatF& f = mems[i]->features;
    if (f.rows() != cfg_.final_dim() || f.cols() != cfg_.n_memory_tokens())
      throw ShapeMismatch("visual features have the wrong shape");
    ItemState& it = items[i];
    // per-item setup has batch-independent shapes, so plain gemms are fine
    const MatF mem_rows = f.transpose();
    MatF md = mem_rows * P.at("dec.mem_proj.w");
    md.rowwise() += P.at("dec.mem_proj.b").row(0);
    it.layers.resize(size_t(cfg_.decoder_layers));
    for (int l = 0; l < cfg_.decoder_layers; ++l) {
      const std::string lp = "dec.l" + std::to_string(l) + ".";
      auto& lc = it.layers[size_t(l)];
      lc.ck = md * P.at(lp + "cross.wk");
      lc.ck.rowwise() += P.at(lp + "cross.bk").row(0);
      lc.cv = md * P.at(lp + "cross.wv");
      lc.cv.rowwise() += P.at(lp + "cross.bv").row(0);
      lc.k.resize(0, d);
      lc.v.resize(0, d);
    }
    it.seq.push_back(kBos);
    auto prompt_ids = vocab_.encode_text(prompts[i].text);
    it.seq.insert(it.seq.end(), prompt_ids.begin() + 1, prompt_ids.end() - 1);
    it.seq.push_back(kSep);
    it.prefix_len = it.seq.size();
    if (int(it.prefix_len) >= cap)
      throw ShapeMismatch("prompt does not fit in max_seq_len");
  }

  const auto& tok_embed = P.at("dec.tok_embed");
  const auto& pos_embed = P.at("dec.pos");

  for (int step = 0;; ++step) {
    std::vector<size_t> active;
    for (size_t i = 0; i < items.size(); ++i)
      if (!items[i].done) active.push_back(i);
    if (active.empty()) break;

    MatF x(Eigen::Index(active.size()), d);
    for (size_t r = 0; r < active.size(); ++r)
      x.row(Eigen::Index(r)) = tok_embed.row(items[active[r]].seq[size_t(step)]) +
                               pos_embed.row(step);

    for (int l = 0; l < cfg_.decoder_layers; ++l) {
      const std::string lp = "dec.l" + std::to_string(l) + ".";
      MatF n1 = layernorm_rows(x, P.at(lp + "ln1.g"), P.at(lp + "ln1.b"));
      MatF q = linear_det(n1, P.at(lp + "self.wq"), P.at(lp + "self.bq"));
      MatF k = linear_det(n1, P.at(lp + "self.wk"), P.at(lp + "self.bk"));
      MatF v = linear_det(n1, P.at(lp + "self.wv"), P.at(lp + "self.bv"));

      MatF ctx(x.rows(), d);
      for (size_t r = 0; r < active.size(); ++r) {
        auto& lc = items[active[r]].layers[size_t(l)];
        lc.k.conservativeResize(lc.k.rows() + 1, d);
        lc.v.conservativeResize(lc.v.rows() + 1, d);
        lc.k.row(lc.k.rows() - 1) = k.row(Eigen::Index(r));
        lc.v.row(lc.v.rows() - 1) = v.row(Eigen::Index(r));
        for (int h = 0; h < heads; ++h) {
          Eigen::VectorXf scores =
              lc.k.middleCols(h * dh, dh) * q.row(Eigen::Index(r)).segment(h * dh, dh).transpose();
          scores *= inv_sqrt;
          softmax_col(scores);
          ctx.row(Eigen::Index(r)).segment(h * dh, dh) =
              scores.transpose() * lc.v.middleCols(h * dh, dh);
        }
      }
      x += linear_det(ctx, P.at(lp + "self.wo"), P.at(lp + "self.bo"));

      MatF n2 = layernorm_rows(x, P.at(lp + "ln2.g"), P.at(lp + "ln2.b"));
      MatF cq = linear_det(n2, P.at(lp + "cross.wq"), P.at(lp + "cross.bq"));
      MatF cctx(x.rows(), d);
      for (size_t r = 0; r < active.size(); ++r) {
        auto& lc = items[active[r]].layers[size_t(l)];
        for (int h = 0; h < heads; ++h) {
          Eigen::VectorXf scores =
              lc.ck.middleCols(h * dh, dh) * cq.row(Eigen::Index(r)).segment(h * dh, dh).transpose();
          scores *= inv_sqrt;
          softmax_col(scores);
          cctx.row(Eigen::Index(r)).segment(h * dh, dh) =
              scores.transpose() * lc.cv.middleCols(h * dh, dh);
        }
      }
      x += linear_det(cctx, P.at(lp + "cross.wo"), P.at(lp + "cross.bo"));

      MatF n3 = layernorm_rows(x, P.at(lp + "ln3.g"), P.at(lp + "ln3.b"));
      MatF h1 = linear_det(n3, P.at(lp + "mlp.w1"), P.at(lp + "mlp.b1"));
      gelu_inplace(h1);
      x += linear_det(h1, P.at(lp + "mlp.w2"), P.at(lp + "mlp.b2"));
    }

    MatF xf = layernorm_rows(x, P.at("dec.final_ln.g"), P.at("dec.final_ln.b"));
    MatF logits = linear_det(xf, P.at("dec.out.w"), P.at("dec.out.b"));

    for (size_t r = 0; r < active.size(); ++r) {
      ItemState& it = items[active[r]];
      if (size_t(step) + 1 < it.prefix_len) continue;  // still feeding the prompt
      const TokenId next = TokenId(argmax_row(logits, Eigen::Index(r)));
      if (next == kEos) {
        it.done = true;
        continue;
      }
      it.seq.push_back(next);
      if (next >= 4) it.out_ids.push_back(next);  // specials never surface
      if (int(it.seq.size()) >= cap) {
        it.done = true;
        it.truncated = true;
      }
    }
  }

  std::vector<GenResult> out(items.size());
  for (size_t i = 0; i < items.size(); ++i) {
    out[i].ids = items[i].out_ids;
    out[i].text = vocab_.decode_tokens(items[i].out_ids);
    out[i].truncated = items[i].truncated;
  }
  return out;
}

}  // namespace dolphin
