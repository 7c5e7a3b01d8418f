#include "naive_layers.hpp"

#include <vector>

namespace tnfn::testing {

namespace {

using Mat = std::vector<std::vector<double>>;

Mat zeros(std::size_t r, std::size_t c) { return Mat(r, std::vector<double>(c, 0.0)); }

// Per input channel, per head: Q K^T and V O.
struct Products {
  std::vector<std::vector<Mat>> qk, vo;
};

Products products(const MultiChannelWeights& u) {
  const auto& dm = u.dims;
  Products pr;
  for (const auto& w : u.channels) {
    std::vector<Mat> qk, vo;
    for (const auto& hw : w.heads) {
      Mat a = zeros(dm.model, dm.model), b = zeros(dm.model, dm.model);
      for (std::size_t p = 0; p < dm.model; ++p)
        for (std::size_t q = 0; q < dm.model; ++q) {
          for (std::size_t k = 0; k < dm.key; ++k) a[p][q] += hw.query(p, k) * hw.key(q, k);
          for (std::size_t k = 0; k < dm.value; ++k) b[p][q] += hw.value(p, k) * hw.output(k, q);
        }
      qk.push_back(a);
      vo.push_back(b);
    }
    pr.qk.push_back(qk);
    pr.vo.push_back(vo);
  }
  return pr;
}

}  // namespace

MultiChannelWeights naive_equivariant(const EquivariantParams& p, const MultiChannelWeights& u) {
  const auto& dm = u.dims;
  const std::size_t H = dm.heads, D = dm.model, A = dm.hidden;
  const std::size_t nd = p.in_channels, ne = p.out_channels;
  const Products pr = products(u);
  auto P = [&](const char* name, std::initializer_list<std::size_t> idx) { return p.set.at(name).at(idx); };

  MultiChannelWeights out{dm, {}};
  for (std::size_t e = 0; e < ne; ++e) {
    BlockWeights w = BlockWeights::zeros(dm);
    for (std::size_t h = 0; h < H; ++h) {
      auto& o = w.heads[h];
      for (std::size_t j = 0; j < D; ++j) {
        for (std::size_t k = 0; k < dm.key; ++k) {
          double q = 0, kk = 0;
          for (std::size_t d = 0; d < nd; ++d)
            for (std::size_t r = 0; r < D; ++r) {
              q += u.channels[d].heads[h].query(r, k) * P("Q_block", {e, d, j, r});
              kk += u.channels[d].heads[h].key(r, k) * P("K_block", {e, d, j, r});
            }
          o.query(j, k) = q;
          o.key(j, k) = kk;
        }
        for (std::size_t k = 0; k < dm.value; ++k) {
          double v = 0;
          for (std::size_t d = 0; d < nd; ++d)
            for (std::size_t r = 0; r < D; ++r) v += u.channels[d].heads[h].value(r, k) * P("V_block", {e, d, j, r});
          o.value(j, k) = v;
        }
      }
      for (std::size_t j = 0; j < dm.value; ++j)
        for (std::size_t k = 0; k < D; ++k) {
          double s = 0;
          for (std::size_t d = 0; d < nd; ++d) {
            const auto& O = u.channels[d].heads[h].output;
            double row = 0;
            for (std::size_t c = 0; c < D; ++c) row += O(j, c);
            s += row * P("O_rowsum", {e, d}) + O(j, k) * P("O_pointwise", {e, d});
          }
          o.output(j, k) = s;
        }
    }

    // Terms feeding the MLP outputs, indexed the same way as in the layer table.
    for (std::size_t j = 0; j < D; ++j)
      for (std::size_t k = 0; k < A; ++k) {
        double s = P("A_bias", {e});
        for (std::size_t d = 0; d < nd; ++d) {
          const auto& W = u.channels[d];
          for (std::size_t h = 0; h < H; ++h)
            for (std::size_t a = 0; a < D; ++a) {
              for (std::size_t c = 0; c < D; ++c) {
                s += pr.qk[d][h][a][c] * P("A_from_QK", {e, d, a, c});
                s += pr.vo[d][h][a][c] * P("A_from_VO_1", {e, d, a});
              }
              s += pr.vo[d][h][a][j] * P("A_from_VO_2", {e, d, a});
            }
          for (std::size_t a = 0; a < D; ++a)
            for (std::size_t c = 0; c < A; ++c) s += W.mlp_in(a, c) * P("A_from_A_1", {e, d});
          for (std::size_t c = 0; c < A; ++c) s += W.mlp_in(j, c) * P("A_from_A_2", {e, d});
          for (std::size_t a = 0; a < D; ++a) s += W.mlp_in(a, k) * P("A_from_A_3", {e, d});
          s += W.mlp_in(j, k) * P("A_from_A_4", {e, d});
          for (std::size_t a = 0; a < A; ++a)
            for (std::size_t c = 0; c < D; ++c) s += W.mlp_out(a, c) * P("A_from_B_1", {e, d, c});
          for (std::size_t c = 0; c < D; ++c) s += W.mlp_out(k, c) * P("A_from_B_2", {e, d, c});
          for (std::size_t c = 0; c < A; ++c) s += W.bias_in(0, c) * P("A_from_bA_1", {e, d});
          s += W.bias_in(0, k) * P("A_from_bA_2", {e, d});
          for (std::size_t c = 0; c < D; ++c) s += W.bias_out(0, c) * P("A_from_bB", {e, d, c});
        }
        w.mlp_in(j, k) = s;
      }

    for (std::size_t k = 0; k < A; ++k) {
      double s = P("bA_bias", {e});
      for (std::size_t d = 0; d < nd; ++d) {
        const auto& W = u.channels[d];
        for (std::size_t h = 0; h < H; ++h)
          for (std::size_t a = 0; a < D; ++a)
            for (std::size_t c = 0; c < D; ++c) {
              s += pr.qk[d][h][a][c] * P("bA_from_QK", {e, d, a, c});
              s += pr.vo[d][h][a][c] * P("bA_from_VO", {e, d, a});
            }
        for (std::size_t a = 0; a < D; ++a)
          for (std::size_t c = 0; c < A; ++c) s += W.mlp_in(a, c) * P("bA_from_A_1", {e, d});
        for (std::size_t a = 0; a < D; ++a) s += W.mlp_in(a, k) * P("bA_from_A_2", {e, d});
        for (std::size_t a = 0; a < A; ++a)
          for (std::size_t c = 0; c < D; ++c) s += W.mlp_out(a, c) * P("bA_from_B_1", {e, d, c});
        for (std::size_t c = 0; c < D; ++c) s += W.mlp_out(k, c) * P("bA_from_B_2", {e, d, c});
        for (std::size_t c = 0; c < A; ++c) s += W.bias_in(0, c) * P("bA_from_bA_1", {e, d});
        s += W.bias_in(0, k) * P("bA_from_bA_2", {e, d});
        for (std::size_t c = 0; c < D; ++c) s += W.bias_out(0, c) * P("bA_from_bB", {e, d, c});
      }
      w.bias_in(0, k) = s;
    }

    for (std::size_t j = 0; j < A; ++j)
      for (std::size_t k = 0; k < D; ++k) {
        double s = P("B_bias", {e, k});
        for (std::size_t d = 0; d < nd; ++d) {
          const auto& W = u.channels[d];
          for (std::size_t h = 0; h < H; ++h)
            for (std::size_t a = 0; a < D; ++a)
              for (std::size_t c = 0; c < D; ++c) {
                s += pr.qk[d][h][a][c] * P("B_from_QK", {e, d, k, a, c});
                s += pr.vo[d][h][a][c] * P("B_from_VO", {e, d, k, a});
              }
          for (std::size_t a = 0; a < D; ++a) {
            for (std::size_t c = 0; c < A; ++c) s += W.mlp_in(a, c) * P("B_from_A_1", {e, d, k});
            s += W.mlp_in(a, j) * P("B_from_A_2", {e, d, k});
          }
          for (std::size_t c = 0; c < D; ++c) {
            for (std::size_t a = 0; a < A; ++a) s += W.mlp_out(a, c) * P("B_from_B_1", {e, d, k, c});
            s += W.mlp_out(j, c) * P("B_from_B_2", {e, d, k, c});
          }
          for (std::size_t c = 0; c < A; ++c) s += W.bias_in(0, c) * P("B_from_bA_1", {e, d, k});
          s += W.bias_in(0, j) * P("B_from_bA_2", {e, d, k});
          for (std::size_t c = 0; c < D; ++c) s += W.bias_out(0, c) * P("B_from_bB", {e, d, k, c});
        }
        w.mlp_out(j, k) = s;
      }

    for (std::size_t k = 0; k < D; ++k) {
      double s = P("bB_bias", {e, k});
      for (std::size_t d = 0; d < nd; ++d) {
        const auto& W = u.channels[d];
        for (std::size_t h = 0; h < H; ++h)
          for (std::size_t a = 0; a < D; ++a)
            for (std::size_t c = 0; c < D; ++c) {
              s += pr.qk[d][h][a][c] * P("bB_from_QK", {e, d, k, a, c});
              s += pr.vo[d][h][a][c] * P("bB_from_VO", {e, d, k, a});
            }
        for (std::size_t a = 0; a < D; ++a)
          for (std::size_t c = 0; c < A; ++c) s += W.mlp_in(a, c) * P("bB_from_A", {e, d, k});
        for (std::size_t a = 0; a < A; ++a)
          for (std::size_t c = 0; c < D; ++c) s += W.mlp_out(a, c) * P("bB_from_B", {e, d, k, c});
        for (std::size_t c = 0; c < A; ++c) s += W.bias_in(0, c) * P("bB_from_bA", {e, d, k});
        for (std::size_t c = 0; c < D; ++c) s += W.bias_out(0, c) * P("bB_from_bB", {e, d, k, c});
      }
      w.bias_out(0, k) = s;
    }
    out.channels.push_back(std::move(w));
  }
  return out;
}

Tensor naive_invariant(const InvariantParams& p, const MultiChannelWeights& u) {
  const auto& dm = u.dims;
  const std::size_t H = dm.heads, D = dm.model, A = dm.hidden;
  const Products pr = products(u);
  auto P = [&](const char* name, std::initializer_list<std::size_t> idx) { return p.set.at(name).at(idx); };
  Tensor out({p.out_channels, p.features});
  for (std::size_t e = 0; e < p.out_channels; ++e)
    for (std::size_t k = 0; k < p.features; ++k) {
      double s = P("I_bias", {e, k});
      for (std::size_t d = 0; d < p.in_channels; ++d) {
        const auto& W = u.channels[d];
        for (std::size_t h = 0; h < H; ++h)
          for (std::size_t a = 0; a < D; ++a)
            for (std::size_t c = 0; c < D; ++c) {
              s += pr.qk[d][h][a][c] * P("I_QK", {e, d, a, c, k});
              s += pr.vo[d][h][a][c] * P("I_VO", {e, d, a, k});
            }
        for (std::size_t a = 0; a < D; ++a)
          for (std::size_t c = 0; c < A; ++c) s += W.mlp_in(a, c) * P("I_A", {e, d, k});
        for (std::size_t a = 0; a < A; ++a)
          for (std::size_t c = 0; c < D; ++c) s += W.mlp_out(a, c) * P("I_B", {e, d, c, k});
        for (std::size_t c = 0; c < A; ++c) s += W.bias_in(0, c) * P("I_bA", {e, d, k});
        for (std::size_t c = 0; c < D; ++c) s += W.bias_out(0, c) * P("I_bB", {e, d, c, k});
      }
      out.at({e, k}) = s;
    }
  return out;
}

}  // namespace tnfn::testing
