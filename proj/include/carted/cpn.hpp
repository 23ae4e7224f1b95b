#pragma once

// Causal phenotype network: thresholded intra-slice edges from W plus the
// temporal edges of A whose (i, j) pair is not already an intra edge.

#include <string>
#include <vector>

#include "carted/errors.hpp"
#include "carted/graph_utils.hpp"
#include "carted/linalg.hpp"

namespace carted {

struct CpnEdge {
    Index from = 0;
    Index to = 0;
    double weight = 0.0;
    Index lag = 0;  // 0 for intra edges
};

struct CpnSummary {
    std::vector<std::string> labels;
    std::vector<CpnEdge> intra;
    std::vector<CpnEdge> temporal;
};

/// Any |entry| > tau is an edge. For a pair (i, j) present in several lags,
/// the temporal edge keeps the lag with the largest magnitude.
inline CpnSummary summarize_cpn(const Matrix& w, const std::vector<Matrix>& a, double tau_w, double tau_a,
                                std::vector<std::string> labels = {}) {
    detail::require_dims(w.rows() == w.cols(), "summarize_cpn: W must be square, got " + shape_str(w));
    for (const auto& ap : a)
        detail::require_dims(ap.rows() == w.rows() && ap.cols() == w.cols(),
                             "summarize_cpn: A has shape " + shape_str(ap) + ", W is " + shape_str(w));
    detail::require_arg(tau_w >= 0.0 && tau_a >= 0.0, "summarize_cpn: thresholds must be non-negative");
    const Index n = w.rows();
    if (labels.empty())
        for (Index i = 0; i < n; ++i) labels.push_back(std::to_string(i));
    detail::require_arg(static_cast<Index>(labels.size()) == n,
                        "summarize_cpn: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) +
                            " nodes");

    Adjacency intra = binarize(w, tau_w);
    intra.diagonal().setZero();
    if (const auto cycle = find_cycle(intra)) {
        std::string path;
        for (std::size_t i = 0; i < cycle->size(); ++i) path += (i ? " -> " : "") + labels[(*cycle)[i]];
        throw NumericError("summarize_cpn: thresholded W is cyclic: " + path);
    }

    CpnSummary out;
    out.labels = std::move(labels);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j)
            if (intra(i, j)) out.intra.push_back({i, j, w(i, j), 0});
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) {
            if (intra(i, j)) continue;
            CpnEdge best{i, j, 0.0, 0};
            for (std::size_t p = 0; p < a.size(); ++p) {
                const double v = a[p](i, j);
                if (std::abs(v) > tau_a && std::abs(v) > std::abs(best.weight)) best = {i, j, v, static_cast<Index>(p) + 1};
            }
            if (best.lag > 0) out.temporal.push_back(best);
        }
    return out;
}

}  // namespace carted
