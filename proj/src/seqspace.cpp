#include "smallgain/seqspace.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace smallgain {

namespace {

double euclidean(std::span<const double> v) {
    double scale = 0.0;
    for (double c : v) scale = std::max(scale, std::abs(c));
    if (scale == 0.0) return 0.0;
    double ssq = 0.0;
    for (double c : v) {
        const double r = c / scale;
        ssq += r * r;
    }
    return scale * std::sqrt(ssq);
}

}  // namespace

BlockDims::BlockDims(std::vector<int> prefix, int tail_dim)
    : prefix_(std::move(prefix)), tail_dim_(tail_dim) {
    for (int n : prefix_) require(n >= 1, "block dimension must be at least 1");
    require(tail_dim_ >= 1, "tail block dimension must be at least 1");
}

BlockDims BlockDims::from_rule(const std::function<int(std::size_t)>& rule,
                               std::size_t prefix_len) {
    std::vector<int> prefix(prefix_len);
    for (std::size_t i = 0; i < prefix_len; ++i) prefix[i] = rule(i);
    return BlockDims(std::move(prefix), rule(prefix_len));
}

BlockLayout::BlockLayout(const BlockDims& dims, std::size_t n_blocks)
    : dims_(dims), offsets_(n_blocks + 1) {
    require(n_blocks >= 1, "a truncation needs at least one block");
    offsets_[0] = 0;
    for (std::size_t i = 0; i < n_blocks; ++i)
        offsets_[i + 1] = offsets_[i] + static_cast<std::size_t>(dims.dim(i));
}

std::span<const double> BlockLayout::block(std::span<const double> flat,
                                           std::size_t i) const {
    require(flat.size() == flat_dim(), "flat vector does not match layout");
    require(i < blocks(), "block index out of range");
    return flat.subspan(offsets_[i], offsets_[i + 1] - offsets_[i]);
}

bool block_set_contains_zero(const BlockSet& s, int dim) {
    if (std::holds_alternative<OriginSet>(s) || std::holds_alternative<FullSet>(s) ||
        std::holds_alternative<DiagonalSet>(s))
        return true;
    if (const auto* pt = std::get_if<PointSet>(&s))
        return std::all_of(pt->point.begin(), pt->point.end(),
                           [](double c) { return c == 0.0; });
    const auto& box = std::get<BoxSet>(s);
    for (int k = 0; k < dim; ++k)
        if (box.lo[k] > 0.0 || box.hi[k] < 0.0) return false;
    return true;
}

double block_set_sup_norm(const BlockSet& s, int dim) {
    if (std::holds_alternative<OriginSet>(s)) return 0.0;
    if (std::holds_alternative<FullSet>(s) || std::holds_alternative<DiagonalSet>(s))
        return std::numeric_limits<double>::infinity();
    if (const auto* pt = std::get_if<PointSet>(&s)) return euclidean(pt->point);
    const auto& box = std::get<BoxSet>(s);
    std::vector<double> corner(dim);
    for (int k = 0; k < dim; ++k)
        corner[k] = std::max(std::abs(box.lo[k]), std::abs(box.hi[k]));
    return euclidean(corner);
}

void validate_block_set(const BlockSet& s, int dim) {
    if (const auto* pt = std::get_if<PointSet>(&s)) {
        require(static_cast<int>(pt->point.size()) == dim,
                "point descriptor length does not match block dimension");
        for (double c : pt->point)
            require(std::isfinite(c), "point descriptor must be finite");
    } else if (const auto* box = std::get_if<BoxSet>(&s)) {
        require(static_cast<int>(box->lo.size()) == dim &&
                    static_cast<int>(box->hi.size()) == dim,
                "box descriptor length does not match block dimension");
        for (int k = 0; k < dim; ++k) {
            require(std::isfinite(box->lo[k]) && std::isfinite(box->hi[k]),
                    "box descriptor must be finite");
            require(box->lo[k] <= box->hi[k], "box descriptor needs lo <= hi");
        }
    } else if (std::holds_alternative<DiagonalSet>(s)) {
        require(dim % 2 == 0, "diagonal descriptor needs an even paired block");
    }
}

SetSpec::SetSpec(std::vector<BlockSet> prefix, BlockSet tail, const BlockDims& dims)
    : prefix_(std::move(prefix)), tail_(std::move(tail)), dims_(dims) {
    for (std::size_t i = 0; i < prefix_.size(); ++i)
        validate_block_set(prefix_[i], dims_.dim(i));
    validate_block_set(tail_, dims_.tail_dim());
    // The tail descriptor must fit every block beyond the set prefix.
    for (std::size_t i = prefix_.size(); i < dims_.prefix_size(); ++i)
        validate_block_set(tail_, dims_.dim(i));
    require(block_set_contains_zero(tail_, dims_.tail_dim()),
            "tail descriptor must contain 0, otherwise the product set admits "
            "no element of the sequence space");
}

double SetSpec::sup_norm(double p) const {
    validate_exponent(p);
    const double tail_sup = block_set_sup_norm(tail_, dims_.tail_dim());
    if (tail_sup > 0.0) return std::numeric_limits<double>::infinity();
    std::vector<double> sups(prefix_.size());
    for (std::size_t i = 0; i < prefix_.size(); ++i) {
        sups[i] = block_set_sup_norm(prefix_[i], dims_.dim(i));
        if (!std::isfinite(sups[i])) return std::numeric_limits<double>::infinity();
    }
    return aggregate_lp(sups, p);
}

void validate_exponent(double p) {
    require(std::isfinite(p) && p >= 1.0,
            "exponent p must lie in [1, inf); p = inf is not supported because "
            "the distance formula and the certificates assume finite p");
}

double aggregate_lp(std::span<const double> terms, double p) {
    validate_exponent(p);
    double scale = 0.0;
    for (double t : terms) scale = std::max(scale, t);
    if (scale == 0.0) return 0.0;
    if (!std::isfinite(scale)) return scale;
    double acc = 0.0;
    for (double t : terms) {
        if (t == 0.0) continue;
        acc += std::pow(t / scale, p);
    }
    return scale * std::pow(acc, 1.0 / p);
}

double lp_norm(const BlockLayout& layout, std::span<const double> flat, double p) {
    validate_exponent(p);
    require(flat.size() == layout.flat_dim(), "flat vector does not match layout");
    std::vector<double> terms(layout.blocks());
    for (std::size_t i = 0; i < layout.blocks(); ++i)
        terms[i] = euclidean(layout.block(flat, i));
    return aggregate_lp(terms, p);
}

double block_dist(std::span<const double> x, const BlockSet& s) {
    validate_block_set(s, static_cast<int>(x.size()));
    if (std::holds_alternative<OriginSet>(s)) return euclidean(x);
    if (std::holds_alternative<FullSet>(s)) return 0.0;
    if (const auto* pt = std::get_if<PointSet>(&s)) {
        require(pt->point.size() == x.size(), "block dimension mismatch");
        std::vector<double> d(x.size());
        for (std::size_t k = 0; k < x.size(); ++k) d[k] = x[k] - pt->point[k];
        return euclidean(d);
    }
    if (const auto* box = std::get_if<BoxSet>(&s)) {
        require(box->lo.size() == x.size(), "block dimension mismatch");
        std::vector<double> d(x.size());
        for (std::size_t k = 0; k < x.size(); ++k)
            d[k] = x[k] - std::clamp(x[k], box->lo[k], box->hi[k]);
        return euclidean(d);
    }
    // Diagonal on a paired block (u, v): nearest (z, z) is z = (u + v)/2.
    const std::size_t h = x.size() / 2;
    std::vector<double> d(h);
    for (std::size_t k = 0; k < h; ++k) d[k] = x[k] - x[h + k];
    return euclidean(d) / std::sqrt(2.0);
}

double set_dist(const BlockLayout& layout, std::span<const double> flat,
                const SetSpec& A, double p) {
    validate_exponent(p);
    require(flat.size() == layout.flat_dim(), "flat vector does not match layout");
    std::vector<double> terms(layout.blocks());
    for (std::size_t i = 0; i < layout.blocks(); ++i) {
        validate_block_set(A.block(i), layout.dim(i));
        terms[i] = block_dist(layout.block(flat, i), A.block(i));
    }
    return aggregate_lp(terms, p);
}

double pair_dist_to_diagonal(const BlockLayout& layout,
                             std::span<const double> x,
                             std::span<const double> y, double p) {
    validate_exponent(p);
    require(x.size() == layout.flat_dim() && y.size() == layout.flat_dim(),
            "pair members must share the layout");
    std::vector<double> diff(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) diff[k] = x[k] - y[k];
    return lp_norm(layout, diff, p) / std::sqrt(2.0);
}

TruncSeq::TruncSeq(std::shared_ptr<const BlockLayout> layout, double p,
                   std::vector<double> flat)
    : layout_(std::move(layout)), p_(p), flat_(std::move(flat)) {
    require(layout_ != nullptr, "layout must not be null");
    validate_exponent(p_);
    require(flat_.size() == layout_->flat_dim(),
            "flat vector does not match layout");
    for (double c : flat_)
        require(std::isfinite(c), "sequence entries must be finite");
}

TruncSeq TruncSeq::zeros(std::shared_ptr<const BlockLayout> layout, double p) {
    std::vector<double> flat(layout->flat_dim(), 0.0);
    return TruncSeq(std::move(layout), p, std::move(flat));
}

}  // namespace smallgain
