#pragma once

// Symmetric indefinite factorization for bordered block-diagonal matrices
//
//   [ B_1            C_1 ]
//   [      ...       ... ]
//   [           B_k  C_k ]
//   [ C_1^T ... C_k^T  D ]
//
// Each diagonal block is factorized densely with Bunch-Kaufman pivoting
// (LAPACK dsytrf), the border through the Schur complement
// S = D - sum C_i^T B_i^{-1} C_i. By Haynsworth additivity the inertia of the
// whole matrix is the sum of the inertias of the B_i and S.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <lapacke.h>

namespace sctep {

struct Inertia {
  std::size_t positive = 0;
  std::size_t negative = 0;
  std::size_t zero = 0;
};

namespace detail {

/// Dense symmetric indefinite factor of one block (lower storage).
class DenseSymFactor {
 public:
  void resize(int n) {
    n_ = n;
    a_.assign(static_cast<std::size_t>(n) * n, 0.0);
    ipiv_.assign(static_cast<std::size_t>(n), 0);
  }
  [[nodiscard]] int size() const { return n_; }
  double& at(int r, int c) { return a_[static_cast<std::size_t>(c) * n_ + r]; }
  void clear() { std::fill(a_.begin(), a_.end(), 0.0); }

  /// Factorizes in place. Returns false on an exactly singular pivot.
  bool factor(Inertia& in) {
    if (n_ == 0) return true;
    const lapack_int info =
        LAPACKE_dsytrf(LAPACK_COL_MAJOR, 'L', n_, a_.data(), n_, ipiv_.data());
    if (info < 0) throw std::logic_error("dsytrf: bad argument");
    for (int k = 0; k < n_;) {
      if (ipiv_[k] > 0 || k + 1 == n_) {
        const double d = a_[static_cast<std::size_t>(k) * n_ + k];
        if (!std::isfinite(d) || d == 0.0) {
          ++in.zero;
        } else {
          ++(d > 0.0 ? in.positive : in.negative);
        }
        k += 1;
      } else {
        const double a = a_[static_cast<std::size_t>(k) * n_ + k];
        const double b = a_[static_cast<std::size_t>(k) * n_ + k + 1];
        const double c = a_[static_cast<std::size_t>(k + 1) * n_ + k + 1];
        const double det = a * c - b * b;
        if (!std::isfinite(det) || det == 0.0) {
          in.zero += 2;
        } else if (det < 0.0) {
          ++in.positive;
          ++in.negative;
        } else {
          (a > 0.0 ? in.positive : in.negative) += 2;
        }
        k += 2;
      }
    }
    return info == 0;
  }

  /// Overwrites the column-major n x nrhs matrix b with A^{-1} b.
  void solve(double* b, int nrhs) const {
    if (n_ == 0 || nrhs == 0) return;
    LAPACKE_dsytrs(LAPACK_COL_MAJOR, 'L', n_, nrhs, a_.data(), n_, ipiv_.data(), b, n_);
  }

 private:
  int n_ = 0;
  std::vector<double> a_;
  std::vector<lapack_int> ipiv_;
};

}  // namespace detail

class BorderedBlockFactor {
 public:
  using SpMat = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

  /// `pattern` holds the lower triangle. `part[i]` is the block of unknown i,
  /// or -1 for the border. Entries coupling two different blocks are not
  /// allowed.
  void analyze(const SpMat& pattern, const std::vector<int>& part) {
    const int dim = static_cast<int>(pattern.rows());
    if (static_cast<int>(part.size()) != dim) {
      throw std::invalid_argument("partition size mismatch");
    }
    int nblocks = 0;
    for (int b : part) nblocks = std::max(nblocks, b + 1);
    blocks_.assign(static_cast<std::size_t>(nblocks), {});
    local_.assign(static_cast<std::size_t>(dim), -1);
    border_.clear();
    for (int i = 0; i < dim; ++i) {
      if (part[i] < 0) {
        local_[i] = static_cast<int>(border_.size());
        border_.push_back(i);
      } else {
        auto& blk = blocks_[static_cast<std::size_t>(part[i])];
        local_[i] = static_cast<int>(blk.index.size());
        blk.index.push_back(i);
      }
    }
    part_ = part;
    const int nb = static_cast<int>(border_.size());
    for (auto& blk : blocks_) {
      blk.f.resize(static_cast<int>(blk.index.size()));
      blk.c = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(blk.index.size()), nb);
    }
    d_.resize(nb);

    // Route every stored entry.
    route_.clear();
    route_.reserve(static_cast<std::size_t>(pattern.nonZeros()));
    for (int c = 0; c < pattern.outerSize(); ++c) {
      for (SpMat::InnerIterator it(pattern, c); it; ++it) {
        const int r = static_cast<int>(it.row());
        const int pr = part[r];
        const int pc = part[c];
        Route rt;
        if (pr >= 0 && pc >= 0) {
          if (pr != pc) throw std::invalid_argument("entry couples two blocks");
          rt.kind = Route::Block;
          rt.block = pr;
          rt.r = std::max(local_[r], local_[c]);
          rt.c = std::min(local_[r], local_[c]);
        } else if (pr < 0 && pc < 0) {
          rt.kind = Route::Border;
          rt.r = std::max(local_[r], local_[c]);
          rt.c = std::min(local_[r], local_[c]);
        } else {
          rt.kind = Route::Coupling;
          rt.block = pr >= 0 ? pr : pc;
          rt.r = pr >= 0 ? local_[r] : local_[c];
          rt.c = pr >= 0 ? local_[c] : local_[r];
        }
        route_.push_back(rt);
      }
    }
  }

  /// Factorizes the values of `k`, which must share the analyzed pattern.
  /// Returns false when a pivot is exactly singular.
  bool factorize(const SpMat& k) {
    inertia_ = {};
    for (auto& blk : blocks_) {
      blk.f.clear();
      blk.c.setZero();
    }
    d_.clear();
    const double* val = k.valuePtr();
    for (std::size_t q = 0; q < route_.size(); ++q) {
      const auto& rt = route_[q];
      switch (rt.kind) {
        case Route::Block:
          blocks_[static_cast<std::size_t>(rt.block)].f.at(rt.r, rt.c) += val[q];
          break;
        case Route::Coupling:
          blocks_[static_cast<std::size_t>(rt.block)].c(rt.r, rt.c) += val[q];
          break;
        case Route::Border:
          d_.at(rt.r, rt.c) += val[q];
          break;
      }
    }
    bool ok = true;
    const int nb = static_cast<int>(border_.size());
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(nb, nb);
    for (auto& blk : blocks_) {
      ok = blk.f.factor(inertia_) && ok;
      if (!ok) continue;
      if (nb > 0) {
        blk.x = blk.c;
        blk.f.solve(blk.x.data(), nb);
        s.noalias() -= blk.c.transpose() * blk.x;
      }
    }
    if (!ok) return false;
    for (int c = 0; c < nb; ++c) {
      for (int r = c; r < nb; ++r) d_.at(r, c) += s(r, c);
    }
    return d_.factor(inertia_);
  }

  [[nodiscard]] const Inertia& inertia() const { return inertia_; }

  [[nodiscard]] Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
    const int nb = static_cast<int>(border_.size());
    Eigen::VectorXd rb(nb);
    for (int i = 0; i < nb; ++i) rb[i] = rhs[border_[i]];
    std::vector<Eigen::VectorXd> u(blocks_.size());
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      const auto& blk = blocks_[b];
      u[b].resize(static_cast<Eigen::Index>(blk.index.size()));
      for (std::size_t i = 0; i < blk.index.size(); ++i) u[b][i] = rhs[blk.index[i]];
      blk.f.solve(u[b].data(), 1);
      if (nb > 0) rb.noalias() -= blk.c.transpose() * u[b];
    }
    d_.solve(rb.data(), 1);
    Eigen::VectorXd out(rhs.size());
    for (int i = 0; i < nb; ++i) out[border_[i]] = rb[i];
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      const auto& blk = blocks_[b];
      if (nb > 0) u[b].noalias() -= blk.x * rb;
      for (std::size_t i = 0; i < blk.index.size(); ++i) out[blk.index[i]] = u[b][i];
    }
    return out;
  }

 private:
  struct Route {
    enum Kind : unsigned char { Block, Coupling, Border } kind = Block;
    int block = -1;
    int r = 0;
    int c = 0;
  };
  struct Block {
    std::vector<int> index;
    detail::DenseSymFactor f;
    Eigen::MatrixXd c;  // block rows x border columns
    Eigen::MatrixXd x;  // B^{-1} C
  };

  std::vector<Block> blocks_;
  std::vector<int> border_;
  std::vector<int> local_;
  std::vector<int> part_;
  std::vector<Route> route_;
  detail::DenseSymFactor d_;
  Inertia inertia_;
};

/// Splits the unknowns of a symmetric pattern into connected components after
/// removing the `border` unknowns. Returns the block id per unknown, -1 for
/// border entries.
inline std::vector<int> partition_by_components(const Eigen::SparseMatrix<double, Eigen::ColMajor, int>& pattern,
                                                const std::vector<bool>& border) {
  const int dim = static_cast<int>(pattern.rows());
  std::vector<int> parent(static_cast<std::size_t>(dim));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int a) {
    while (parent[a] != a) {
      parent[a] = parent[parent[a]];
      a = parent[a];
    }
    return a;
  };
  for (int c = 0; c < pattern.outerSize(); ++c) {
    if (border[c]) continue;
    for (Eigen::SparseMatrix<double, Eigen::ColMajor, int>::InnerIterator it(pattern, c); it; ++it) {
      const int r = static_cast<int>(it.row());
      if (border[r]) continue;
      const int a = find(r);
      const int b = find(c);
      if (a != b) parent[a] = b;
    }
  }
  std::vector<int> id(static_cast<std::size_t>(dim), -1);
  std::vector<int> part(static_cast<std::size_t>(dim), -1);
  int next = 0;
  for (int i = 0; i < dim; ++i) {
    if (border[i]) continue;
    const int root = find(i);
    if (id[root] < 0) id[root] = next++;
    part[i] = id[root];
  }
  return part;
}

}  // namespace sctep
