#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "fad/tensor.hpp"

// Nearest-centroid classification over unit-norm embeddings: the class score
// of a query is the cosine similarity to the renormalized class centroid,
// scaled by a fixed temperature.

namespace fad {

inline constexpr double kNccTemperature = 10.0;

// support_emb: one unit vector per support example; labels in 0..n_classes-1,
// every class populated. Returns an n_query x n_classes logit matrix.
inline Tensor ncc_logits(const std::vector<Tensor>& support_emb, const std::vector<int>& labels,
                         const std::vector<Tensor>& query_emb, int n_classes,
                         double temperature = kNccTemperature) {
    if (support_emb.size() != labels.size())
        throw std::invalid_argument("ncc_logits: support/label count mismatch");
    if (n_classes < 1) throw std::invalid_argument("ncc_logits: need at least one class");
    const std::size_t dim = support_emb.empty() ? 0 : support_emb[0].size();

    std::vector<Tensor> centroids(n_classes, Tensor({dim}, 0.0));
    std::vector<std::size_t> counts(n_classes, 0);
    for (std::size_t i = 0; i < support_emb.size(); ++i) {
        const int y = labels[i];
        if (y < 0 || y >= n_classes)
            throw std::invalid_argument("ncc_logits: label " + std::to_string(y) +
                                        " out of range");
        for (std::size_t d = 0; d < dim; ++d) centroids[y].values[d] += support_emb[i].values[d];
        ++counts[y];
    }
    for (int c = 0; c < n_classes; ++c) {
        if (counts[c] == 0)
            throw std::invalid_argument("ncc_logits: class " + std::to_string(c) +
                                        " has no support examples");
        double norm = 0.0;
        for (double v : centroids[c].values) norm += v * v;
        norm = std::sqrt(norm);
        if (norm > 0.0)
            for (double& v : centroids[c].values) v /= norm;
    }

    Tensor logits({query_emb.size(), static_cast<std::size_t>(n_classes)});
    for (std::size_t q = 0; q < query_emb.size(); ++q) {
        double qnorm = 0.0;
        for (double v : query_emb[q].values) qnorm += v * v;
        qnorm = std::sqrt(qnorm);
        for (int c = 0; c < n_classes; ++c) {
            double dot = 0.0;
            for (std::size_t d = 0; d < dim; ++d)
                dot += query_emb[q].values[d] * centroids[c].values[d];
            logits.at(q, static_cast<std::size_t>(c)) =
                qnorm > 0.0 ? temperature * dot / qnorm : 0.0;
        }
    }
    return logits;
}

// Mean negative log softmax likelihood, stabilized by max subtraction.
inline double cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    const std::size_t n = logits.dim(0), m = logits.dim(1);
    if (labels.size() != n)
        throw std::invalid_argument("cross_entropy: label count mismatch");
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= m)
            throw std::invalid_argument("cross_entropy: label out of range");
        double mx = logits.at(i, std::size_t{0});
        for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, logits.at(i, j));
        double lse = 0.0;
        for (std::size_t j = 0; j < m; ++j) lse += std::exp(logits.at(i, j) - mx);
        loss += mx + std::log(lse) - logits.at(i, static_cast<std::size_t>(y));
    }
    return loss / static_cast<double>(n);
}

inline double accuracy(const Tensor& logits, const std::vector<int>& labels) {
    const auto pred = argmax_rows(logits);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (static_cast<int>(pred[i]) == labels[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(pred.size());
}

}  // namespace fad
