#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <variant>
#include <vector>

#include "smallgain/errors.hpp"

namespace smallgain {

// Block dimensions (n_i) of a sequence space with block structure: an explicit
// finite prefix plus a constant tail. A generator rule can seed the prefix but
// must be constant beyond it; that keeps every tail quantity exactly computable.
class BlockDims {
public:
    BlockDims(std::vector<int> prefix, int tail_dim);
    static BlockDims uniform(int n) { return BlockDims({}, n); }
    static BlockDims from_rule(const std::function<int(std::size_t)>& rule,
                               std::size_t prefix_len);

    int dim(std::size_t i) const {
        return i < prefix_.size() ? prefix_[i] : tail_dim_;
    }
    std::size_t prefix_size() const { return prefix_.size(); }
    int tail_dim() const { return tail_dim_; }

private:
    std::vector<int> prefix_;
    int tail_dim_;
};

// Flat-vector layout of the first N blocks.
class BlockLayout {
public:
    BlockLayout(const BlockDims& dims, std::size_t n_blocks);

    std::size_t blocks() const { return offsets_.size() - 1; }
    std::size_t flat_dim() const { return offsets_.back(); }
    std::size_t offset(std::size_t i) const { return offsets_[i]; }
    int dim(std::size_t i) const {
        return static_cast<int>(offsets_[i + 1] - offsets_[i]);
    }
    const BlockDims& dims() const { return dims_; }

    std::span<const double> block(std::span<const double> flat, std::size_t i) const;

private:
    BlockDims dims_;
    std::vector<std::size_t> offsets_;
};

// Per-block set descriptors. All are nonempty and closed by construction.
struct OriginSet {};
struct FullSet {};
struct PointSet {
    std::vector<double> point;
};
struct BoxSet {
    std::vector<double> lo, hi;
};
// Diagonal of a paired block (x, y) of even dimension 2n: the set {(z, z)}.
// Used for state/observer pairs.
struct DiagonalSet {};

using BlockSet = std::variant<OriginSet, FullSet, PointSet, BoxSet, DiagonalSet>;

bool block_set_contains_zero(const BlockSet& s, int dim);
// sup_{a in S} |a|_2; +inf for unbounded descriptors (Full, Diagonal).
double block_set_sup_norm(const BlockSet& s, int dim);
void validate_block_set(const BlockSet& s, int dim);

// Product set A = X cap (A_1 x A_2 x ...): explicit per-block prefix plus a
// tail descriptor. The tail must contain 0, otherwise no truncated sequence
// has finite distance to A.
class SetSpec {
public:
    SetSpec(std::vector<BlockSet> prefix, BlockSet tail, const BlockDims& dims);
    static SetSpec origin(const BlockDims& dims) {
        return SetSpec({}, OriginSet{}, dims);
    }

    const BlockSet& block(std::size_t i) const {
        return i < prefix_.size() ? prefix_[i] : tail_;
    }
    std::size_t prefix_size() const { return prefix_.size(); }
    const BlockSet& tail() const { return tail_; }
    const BlockDims& dims() const { return dims_; }

    // sup_{a in A} |a|_p; +inf unless every block is bounded and all but
    // finitely many have sup 0.
    double sup_norm(double p) const;

private:
    std::vector<BlockSet> prefix_;
    BlockSet tail_;
    BlockDims dims_;
};

// Exponent validation: the norm and every certificate here assume p in [1, inf).
// p = inf is rejected up front.
void validate_exponent(double p);

// (sum_i t_i^p)^{1/p} for nonnegative terms, scaled to avoid overflow.
double aggregate_lp(std::span<const double> terms, double p);

double lp_norm(const BlockLayout& layout, std::span<const double> flat, double p);

// Euclidean distance of one block to its descriptor. Box uses per-coordinate
// clamping, which is exact for the Euclidean block norm.
double block_dist(std::span<const double> x, const BlockSet& s);

// (sum_i |x_i|_{A_i}^p)^{1/p}. Tail blocks hold x_i = 0 and contribute 0
// because the tail descriptor contains 0.
double set_dist(const BlockLayout& layout, std::span<const double> flat,
                const SetSpec& A, double p);

// Distance of the pair (x, y) to the diagonal {(z, z)} in the paired norm
// sqrt(|x|_p^2 + |y|_p^2). Equals |x - y|_p / sqrt(2); the infimum is achieved
// at z = (x + y)/2.
double pair_dist_to_diagonal(const BlockLayout& layout,
                             std::span<const double> x,
                             std::span<const double> y, double p);

// A truncated element of the sequence space: N explicit blocks, zero beyond.
// Immutable after construction.
class TruncSeq {
public:
    TruncSeq(std::shared_ptr<const BlockLayout> layout, double p,
             std::vector<double> flat);
    static TruncSeq zeros(std::shared_ptr<const BlockLayout> layout, double p);

    double p() const { return p_; }
    const BlockLayout& layout() const { return *layout_; }
    std::shared_ptr<const BlockLayout> layout_ptr() const { return layout_; }
    std::span<const double> flat() const { return flat_; }
    std::span<const double> block(std::size_t i) const {
        return layout_->block(flat_, i);
    }
    std::size_t blocks() const { return layout_->blocks(); }

    double norm() const { return lp_norm(*layout_, flat_, p_); }
    double dist(const SetSpec& A) const { return set_dist(*layout_, flat_, A, p_); }

private:
    std::shared_ptr<const BlockLayout> layout_;
    double p_;
    std::vector<double> flat_;
};

}  // namespace smallgain
