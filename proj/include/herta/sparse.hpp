#pragma once

#include "herta/error.hpp"
#include "herta/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <tuple>
#include <vector>

namespace herta {

struct Triplet {
    std::int32_t row;
    std::int32_t col;
    double value;
};

/// Symmetric sparse matrix in CSR form. Columns are sorted and unique per row
/// and the pattern is structurally symmetric with equal mirrored values.
class SparseSymmetric {
public:
    SparseSymmetric() = default;

    /// Builds from triplets; duplicates are summed. Only the entries given are
    /// stored, so callers pass both (i,j) and (j,i).
    static SparseSymmetric from_triplets(std::int32_t n, std::vector<Triplet> entries) {
        std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
            return std::tie(a.row, a.col) < std::tie(b.row, b.col);
        });
        SparseSymmetric m;
        m.n_ = n;
        m.row_ptr_.assign(static_cast<std::size_t>(n) + 1, 0);
        for (const auto& t : entries) {
            detail::require(t.row >= 0 && t.row < n && t.col >= 0 && t.col < n,
                            ErrorCode::DimensionMismatch, "triplet index out of range");
            if (!m.col_idx_.empty() && m.last_row_ == t.row && m.col_idx_.back() == t.col) {
                m.values_.back() += t.value;
                continue;
            }
            m.col_idx_.push_back(t.col);
            m.values_.push_back(t.value);
            m.last_row_ = t.row;
            ++m.row_ptr_[static_cast<std::size_t>(t.row) + 1];
        }
        for (std::int32_t i = 0; i < n; ++i) m.row_ptr_[i + 1] += m.row_ptr_[i];
        return m;
    }

    static SparseSymmetric identity(std::int32_t n, double scale = 1.0) {
        std::vector<Triplet> t;
        t.reserve(static_cast<std::size_t>(n));
        for (std::int32_t i = 0; i < n; ++i) t.push_back({i, i, scale});
        return from_triplets(n, std::move(t));
    }

    std::int32_t dim() const noexcept { return n_; }
    std::size_t nnz() const noexcept { return values_.size(); }

    std::span<const std::int64_t> row_ptr() const noexcept { return row_ptr_; }
    std::span<const std::int32_t> col_idx() const noexcept { return col_idx_; }
    std::span<const double> values() const noexcept { return values_; }

    /// y = A x
    void multiply(const Eigen::Ref<const Vector>& x, Eigen::Ref<Vector> y) const {
        detail::require(x.size() == n_ && y.size() == n_, ErrorCode::DimensionMismatch,
                        "sparse multiply dimension");
        for (std::int32_t i = 0; i < n_; ++i) {
            double acc = 0.0;
            for (std::int64_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k)
                acc += values_[k] * x[col_idx_[k]];
            y[i] = acc;
        }
    }

    Vector operator*(const Vector& x) const {
        Vector y(n_);
        multiply(x, y);
        return y;
    }

    /// Y = A X for a block of columns.
    DenseMatrix operator*(const DenseMatrix& x) const {
        detail::require(x.rows() == n_, ErrorCode::DimensionMismatch, "sparse multiply rows");
        DenseMatrix y = DenseMatrix::Zero(n_, x.cols());
        for (std::int32_t i = 0; i < n_; ++i)
            for (std::int64_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k)
                y.row(i) += values_[k] * x.row(col_idx_[k]);
        return y;
    }

    Vector diagonal() const {
        Vector d = Vector::Zero(n_);
        for (std::int32_t i = 0; i < n_; ++i)
            for (std::int64_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k)
                if (col_idx_[k] == i) d[i] = values_[k];
        return d;
    }

    /// alpha*I + beta*A, keeping the pattern of A plus the diagonal.
    SparseSymmetric scaled_plus_identity(double alpha, double beta) const {
        std::vector<Triplet> t;
        t.reserve(values_.size() + static_cast<std::size_t>(n_));
        for (std::int32_t i = 0; i < n_; ++i) {
            t.push_back({i, i, alpha});
            for (std::int64_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k)
                t.push_back({i, col_idx_[k], beta * values_[k]});
        }
        return from_triplets(n_, std::move(t));
    }

    Eigen::MatrixXd to_dense() const {
        Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n_, n_);
        for (std::int32_t i = 0; i < n_; ++i)
            for (std::int64_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k)
                d(i, col_idx_[k]) += values_[k];
        return d;
    }

    /// Upper bound on the largest eigenvalue (max absolute row sum).
    double gershgorin_upper() const {
        double best = 0.0;
        for (std::int32_t i = 0; i < n_; ++i) {
            double s = 0.0;
            for (std::int64_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) s += std::abs(values_[k]);
            best = std::max(best, s);
        }
        return best;
    }

    /// True when |A_ii| >= sum_{j != i} |A_ij| for every row.
    bool is_diagonally_dominant(double tol = 0.0) const {
        for (std::int32_t i = 0; i < n_; ++i) {
            double diag = 0.0, off = 0.0;
            for (std::int64_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
                if (col_idx_[k] == i) diag = std::abs(values_[k]);
                else off += std::abs(values_[k]);
            }
            if (diag + tol < off) return false;
        }
        return true;
    }

    /// Structural and numerical symmetry, plus sorted unique columns per row.
    bool is_well_formed(double tol = 0.0) const {
        for (std::int32_t i = 0; i < n_; ++i) {
            for (std::int64_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
                if (k > row_ptr_[i] && col_idx_[k - 1] >= col_idx_[k]) return false;
                const auto mirror = find(col_idx_[k], i);
                if (!mirror || std::abs(*mirror - values_[k]) > tol) return false;
            }
        }
        return true;
    }

    std::optional<double> find(std::int32_t i, std::int32_t j) const {
        const auto first = col_idx_.begin() + row_ptr_[i];
        const auto last = col_idx_.begin() + row_ptr_[i + 1];
        const auto it = std::lower_bound(first, last, j);
        if (it == last || *it != j) return std::nullopt;
        return values_[static_cast<std::size_t>(it - col_idx_.begin())];
    }

private:
    std::int32_t n_ = 0;
    std::int32_t last_row_ = -1;
    std::vector<std::int64_t> row_ptr_{0};
    std::vector<std::int32_t> col_idx_;
    std::vector<double> values_;
};

} // namespace herta
