#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

// Aggregate experiment tables with the standard reporting convention: mean
// accuracy with a 95% confidence half-width of 1.96 * sigma / sqrt(n), using
// the population sigma.

namespace fad {

struct ExperimentRow {
    std::string id;     // axis/cell identifier, e.g. "components/fad"
    std::string label;  // human-readable cell description
    std::vector<double> accuracies;

    double mean() const {
        double sum = 0.0;
        for (double a : accuracies) sum += a;
        return accuracies.empty() ? 0.0 : sum / static_cast<double>(accuracies.size());
    }

    double ci95_halfwidth() const {
        const std::size_t n = accuracies.size();
        if (n == 0) return 0.0;
        const double mu = mean();
        double var = 0.0;
        for (double a : accuracies) var += (a - mu) * (a - mu);
        var /= static_cast<double>(n);  // population variance
        return 1.96 * std::sqrt(var) / std::sqrt(static_cast<double>(n));
    }
};

struct ResultTable {
    std::vector<ExperimentRow> rows;
};

namespace detail {

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

}  // namespace detail

// One line per row: id,label,n,mean,ci95,acc_0,...,acc_{n-1}. The formatting
// is fixed so identical results give identical bytes.
inline std::string to_csv(const ResultTable& table) {
    std::size_t max_n = 0;
    for (const auto& row : table.rows) max_n = std::max(max_n, row.accuracies.size());
    std::string out = "id,label,n,mean_accuracy,ci95_halfwidth";
    for (std::size_t i = 0; i < max_n; ++i) out += ",acc_" + std::to_string(i);
    out += "\n";
    for (const auto& row : table.rows) {
        out += row.id + "," + row.label + "," + std::to_string(row.accuracies.size()) + "," +
               detail::format_double(row.mean()) + "," +
               detail::format_double(row.ci95_halfwidth());
        for (double a : row.accuracies) out += "," + detail::format_double(a);
        out += "\n";
    }
    return out;
}

}  // namespace fad
