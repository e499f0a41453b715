// Reverse-mode autodiff over Eigen matrices, sized for small transformer
// models. A Tape owns the graph of one forward pass; backward() runs the
// recorded closures in reverse creation order.
//
// Matrices are row-major with rows = tokens/patches and cols = channels.
// Variable-length batches are flattened along rows and described by block
// size vectors; attention ops work block by block.
#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

namespace dolphin::nn {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using MatF = Mat<float>;
using MatD = Mat<double>;

template <typename S>
struct Node {
  Mat<S> value;
  Mat<S> grad;
  std::function<void()> backward;

  void ensure_grad() {
    if (grad.rows() != value.rows() || grad.cols() != value.cols())
      grad = Mat<S>::Zero(value.rows(), value.cols());
  }
};

template <typename S>
class Tape {
 public:
  using Ref = Node<S>*;

  Ref leaf(Mat<S> value) {
    nodes_.push_back(std::make_unique<Node<S>>());
    nodes_.back()->value = std::move(value);
    return nodes_.back().get();
  }

  Ref matmul(Ref a, Ref b) {
    Ref out = make(a->value * b->value);
    out->backward = [a, b, out] {
      a->ensure_grad();
      b->ensure_grad();
      a->grad.noalias() += out->grad * b->value.transpose();
      b->grad.noalias() += a->value.transpose() * out->grad;
    };
    return out;
  }

  Ref add(Ref a, Ref b) {
    Ref out = make(a->value + b->value);
    out->backward = [a, b, out] {
      a->ensure_grad();
      b->ensure_grad();
      a->grad += out->grad;
      b->grad += out->grad;
    };
    return out;
  }

  // bias broadcast over rows; bias is 1 x C
  Ref add_rowvec(Ref a, Ref bias) {
    Mat<S> v = a->value;
    v.rowwise() += bias->value.row(0);
    Ref out = make(std::move(v));
    out->backward = [a, bias, out] {
      a->ensure_grad();
      bias->ensure_grad();
      a->grad += out->grad;
      bias->grad.row(0) += out->grad.colwise().sum();
    };
    return out;
  }

  Ref linear(Ref x, Ref w, Ref b) { return add_rowvec(matmul(x, w), b); }

  Ref scale(Ref a, S s) {
    Ref out = make(a->value * s);
    out->backward = [a, out, s] {
      a->ensure_grad();
      a->grad += out->grad * s;
    };
    return out;
  }

  Ref gelu(Ref a) {
    constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
    Mat<S> v = a->value.unaryExpr([](S x) {
      const S u = S(kC) * (x + S(0.044715) * x * x * x);
      return S(0.5) * x * (S(1) + std::tanh(u));
    });
    Ref out = make(std::move(v));
    out->backward = [a, out] {
      a->ensure_grad();
      const auto& x = a->value;
      for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
          const S xi = x(i, j);
          const S u = S(kC) * (xi + S(0.044715) * xi * xi * xi);
          const S t = std::tanh(u);
          const S du = S(kC) * (S(1) + S(3) * S(0.044715) * xi * xi);
          const S d = S(0.5) * (S(1) + t) + S(0.5) * xi * (S(1) - t * t) * du;
          a->grad(i, j) += out->grad(i, j) * d;
        }
    };
    return out;
  }

  // row-wise layernorm; gamma/beta are 1 x C
  Ref layernorm(Ref a, Ref gamma, Ref beta, S eps = S(1e-5)) {
    const Eigen::Index n = a->value.rows(), c = a->value.cols();
    auto xhat = std::make_shared<Mat<S>>(n, c);
    auto inv_sigma = std::make_shared<Mat<S>>(n, 1);
    Mat<S> v(n, c);
    for (Eigen::Index i = 0; i < n; ++i) {
      const S mu = a->value.row(i).mean();
      const S var = (a->value.row(i).array() - mu).square().mean();
      const S is = S(1) / std::sqrt(var + eps);
      (*inv_sigma)(i, 0) = is;
      xhat->row(i) = (a->value.row(i).array() - mu) * is;
      v.row(i) = xhat->row(i).cwiseProduct(gamma->value.row(0)) + beta->value.row(0);
    }
    Ref out = make(std::move(v));
    out->backward = [a, gamma, beta, out, xhat, inv_sigma, c] {
      a->ensure_grad();
      gamma->ensure_grad();
      beta->ensure_grad();
      for (Eigen::Index i = 0; i < a->value.rows(); ++i) {
        const auto dy = out->grad.row(i);
        beta->grad.row(0) += dy;
        gamma->grad.row(0) += dy.cwiseProduct(xhat->row(i));
        const Mat<S> dxhat = dy.cwiseProduct(gamma->value.row(0));
        const S m1 = dxhat.mean();
        const S m2 = dxhat.cwiseProduct(xhat->row(i)).mean();
        a->grad.row(i) +=
            ((dxhat.array() - m1) - xhat->row(i).array() * m2).matrix() *
            (*inv_sigma)(i, 0);
      }
    };
    return out;
  }

  Ref gather_rows(Ref a, std::vector<int> idx) {
    Mat<S> v(Eigen::Index(idx.size()), a->value.cols());
    for (size_t i = 0; i < idx.size(); ++i) v.row(Eigen::Index(i)) = a->value.row(idx[i]);
    Ref out = make(std::move(v));
    auto ids = std::make_shared<std::vector<int>>(std::move(idx));
    out->backward = [a, out, ids] {
      a->ensure_grad();
      for (size_t i = 0; i < ids->size(); ++i)
        a->grad.row((*ids)[i]) += out->grad.row(Eigen::Index(i));
    };
    return out;
  }

  // patch merging: out row i = concat of 4 input rows
  Ref gather_rows_concat4(Ref a, std::vector<std::array<int, 4>> idx) {
    const Eigen::Index c = a->value.cols();
    Mat<S> v(Eigen::Index(idx.size()), 4 * c);
    for (size_t i = 0; i < idx.size(); ++i)
      for (int k = 0; k < 4; ++k)
        v.block(Eigen::Index(i), k * c, 1, c) = a->value.row(idx[i][size_t(k)]);
    Ref out = make(std::move(v));
    auto ids = std::make_shared<std::vector<std::array<int, 4>>>(std::move(idx));
    out->backward = [a, out, ids, c] {
      a->ensure_grad();
      for (size_t i = 0; i < ids->size(); ++i)
        for (int k = 0; k < 4; ++k)
          a->grad.row((*ids)[i][size_t(k)]) += out->grad.block(Eigen::Index(i), k * c, 1, c);
    };
    return out;
  }

  // Multi-head attention over consecutive row blocks. q/k/v have identical
  // block partitions. Optional per-block additive masks (block_len x
  // block_len) and causal masking within each block.
  Ref block_attention(Ref q, Ref k, Ref v, const std::vector<int>& q_blocks,
                      const std::vector<int>& kv_blocks, int heads, bool causal,
                      const std::vector<const Mat<S>*>& masks = {}) {
    const Eigen::Index c = q->value.cols();
    if (c % heads != 0) throw std::invalid_argument("channels not divisible by heads");
    const Eigen::Index dh = c / heads;
    const S inv_sqrt = S(1) / std::sqrt(S(dh));

    auto probs = std::make_shared<std::vector<Mat<S>>>();  // per block*head
    probs->reserve(q_blocks.size() * size_t(heads));
    Mat<S> outv = Mat<S>::Zero(q->value.rows(), c);

    Eigen::Index qoff = 0, koff = 0;
    for (size_t b = 0; b < q_blocks.size(); ++b) {
      const Eigen::Index tq = q_blocks[b], tk = kv_blocks[b];
      for (int h = 0; h < heads; ++h) {
        const auto qh = q->value.block(qoff, h * dh, tq, dh);
        const auto kh = k->value.block(koff, h * dh, tk, dh);
        const auto vh = v->value.block(koff, h * dh, tk, dh);
        Mat<S> scores = (qh * kh.transpose()) * inv_sqrt;
        if (!masks.empty() && masks[b]) scores += *masks[b];
        if (causal)
          for (Eigen::Index i = 0; i < tq; ++i)
            for (Eigen::Index j = i + 1; j < tk; ++j) scores(i, j) = S(-1e9);
        // row-wise softmax
        for (Eigen::Index i = 0; i < tq; ++i) {
          const S mx = scores.row(i).maxCoeff();
          scores.row(i) = (scores.row(i).array() - mx).exp();
          scores.row(i) /= scores.row(i).sum();
        }
        outv.block(qoff, h * dh, tq, dh).noalias() = scores * vh;
        probs->push_back(std::move(scores));
      }
      qoff += tq;
      koff += tk;
    }

    Ref out = make(std::move(outv));
    auto qb = std::make_shared<std::vector<int>>(q_blocks);
    auto kb = std::make_shared<std::vector<int>>(kv_blocks);
    out->backward = [q, k, v, out, probs, qb, kb, heads, dh, inv_sqrt] {
      q->ensure_grad();
      k->ensure_grad();
      v->ensure_grad();
      Eigen::Index qoff = 0, koff = 0;
      size_t pi = 0;
      for (size_t b = 0; b < qb->size(); ++b) {
        const Eigen::Index tq = (*qb)[b], tk = (*kb)[b];
        for (int h = 0; h < heads; ++h) {
          const Mat<S>& p = (*probs)[pi++];
          const auto qh = q->value.block(qoff, h * dh, tq, dh);
          const auto kh = k->value.block(koff, h * dh, tk, dh);
          const auto vh = v->value.block(koff, h * dh, tk, dh);
          const auto dout = out->grad.block(qoff, h * dh, tq, dh);

          v->grad.block(koff, h * dh, tk, dh).noalias() += p.transpose() * dout;
          Mat<S> dp = dout * vh.transpose();
          // softmax backward: ds = p .* (dp - rowsum(dp .* p))
          Mat<S> ds(tq, tk);
          for (Eigen::Index i = 0; i < tq; ++i) {
            const S row_dot = dp.row(i).cwiseProduct(p.row(i)).sum();
            ds.row(i) = p.row(i).cwiseProduct((dp.row(i).array() - row_dot).matrix());
          }
          ds *= inv_sqrt;
          q->grad.block(qoff, h * dh, tq, dh).noalias() += ds * kh;
          k->grad.block(koff, h * dh, tk, dh).noalias() += ds.transpose() * qh;
        }
        qoff += tq;
        koff += tk;
      }
    };
    return out;
  }

  // mean over weighted rows of -log softmax(logits)[target]
  Ref cross_entropy(Ref logits, std::vector<int> targets, std::vector<S> weights) {
    const Eigen::Index n = logits->value.rows();
    if (Eigen::Index(targets.size()) != n || Eigen::Index(weights.size()) != n)
      throw std::invalid_argument("cross_entropy: size mismatch");
    auto probs = std::make_shared<Mat<S>>(n, logits->value.cols());
    S wsum = S(0), loss = S(0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const S mx = logits->value.row(i).maxCoeff();
      probs->row(i) = (logits->value.row(i).array() - mx).exp();
      const S z = probs->row(i).sum();
      probs->row(i) /= z;
      if (weights[size_t(i)] != S(0)) {
        loss -= weights[size_t(i)] * std::log(std::max((*probs)(i, targets[size_t(i)]), S(1e-30)));
        wsum += weights[size_t(i)];
      }
    }
    if (wsum == S(0)) wsum = S(1);
    Mat<S> v(1, 1);
    v(0, 0) = loss / wsum;
    Ref out = make(std::move(v));
    auto tg = std::make_shared<std::vector<int>>(std::move(targets));
    auto wt = std::make_shared<std::vector<S>>(std::move(weights));
    out->backward = [logits, out, probs, tg, wt, wsum] {
      logits->ensure_grad();
      const S g = out->grad(0, 0) / wsum;
      for (Eigen::Index i = 0; i < logits->value.rows(); ++i) {
        const S w = (*wt)[size_t(i)];
        if (w == S(0)) continue;
        logits->grad.row(i) += probs->row(i) * (g * w);
        logits->grad(i, (*tg)[size_t(i)]) -= g * w;
      }
    };
    return out;
  }

  Ref concat_rows(Ref a, Ref b) {
    Mat<S> v(a->value.rows() + b->value.rows(), a->value.cols());
    v.topRows(a->value.rows()) = a->value;
    v.bottomRows(b->value.rows()) = b->value;
    Ref out = make(std::move(v));
    out->backward = [a, b, out] {
      a->ensure_grad();
      b->ensure_grad();
      a->grad += out->grad.topRows(a->value.rows());
      b->grad += out->grad.bottomRows(b->value.rows());
    };
    return out;
  }

  void backward(Ref loss) {
    if (loss->value.size() != 1)
      throw std::invalid_argument("backward expects a scalar loss");
    loss->ensure_grad();
    loss->grad(0, 0) = S(1);
    for (size_t i = nodes_.size(); i-- > 0;)
      if (nodes_[i]->backward && nodes_[i]->grad.size() > 0) nodes_[i]->backward();
  }

  size_t size() const { return nodes_.size(); }

 private:
  Ref make(Mat<S> v) {
    nodes_.push_back(std::make_unique<Node<S>>());
    nodes_.back()->value = std::move(v);
    return nodes_.back().get();
  }

  std::vector<std::unique_ptr<Node<S>>> nodes_;
};

}  // namespace dolphin::nn
