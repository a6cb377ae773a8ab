#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "fefm/data.hpp"
#include "fefm/eigen.hpp"
#include "fefm/shallow.hpp"

namespace fefm {

// sqrt(sum lambda_t^2) over the eigenvalues of a symmetric matrix; equal to
// the Frobenius norm, which the tests use as the independent oracle.
inline double pair_strength(const std::vector<double>& W, int k, double tol = 1e-12) {
    auto eig = symmetric_eigenvalues(W, k, tol);
    double s = 0.0;
    for (double lam : eig.values) s += lam * lam;
    return std::sqrt(s);
}

struct PairStrengthEntry {
    std::string field_a;
    std::string field_b;
    double strength = 0.0;
    std::vector<double> eigenvalues;  // non-increasing
};

struct PairStrengthReport {
    std::vector<PairStrengthEntry> entries;  // strength-descending, name-pair tiebreak
};

inline PairStrengthReport rank_field_pairs(const ShallowParams& model,
                                           const std::vector<std::string>& field_names, int top) {
    if (model.kind != ModelKind::FEFM) throw ConfigError("field analysis requires an FEFM model");
    if (!model.symmetric_mode)
        throw ConfigError(
            "field analysis requires symmetric_mode: the eigenvalue interpretation only holds for "
            "symmetric pair matrices; retrain with symmetric_mode on");
    if (static_cast<int>(field_names.size()) != model.n) throw ConfigError("field name count mismatch");

    FieldPairIndex pairs(model.n);
    PairStrengthReport report;
    for (int p = 0; p < pairs.count(); ++p) {
        auto [f, g] = pairs.fields(p);
        auto W = effective_pair_matrix(model, p);
        auto eig = symmetric_eigenvalues(W, model.k);
        double s = 0.0;
        for (double lam : eig.values) s += lam * lam;
        PairStrengthEntry entry;
        entry.field_a = field_names[f];
        entry.field_b = field_names[g];
        entry.strength = std::sqrt(s);
        entry.eigenvalues = std::move(eig.values);
        report.entries.push_back(std::move(entry));
    }
    std::sort(report.entries.begin(), report.entries.end(),
              [](const PairStrengthEntry& a, const PairStrengthEntry& b) {
                  if (a.strength != b.strength) return a.strength > b.strength;
                  if (a.field_a != b.field_a) return a.field_a < b.field_a;
                  return a.field_b < b.field_b;
              });
    if (top >= 0 && static_cast<int>(report.entries.size()) > top) report.entries.resize(top);
    return report;
}

inline void write_report_csv(std::ostream& out, const PairStrengthReport& report) {
    out << "field_a,field_b,strength,eigenvalues\n";
    for (const auto& e : report.entries) {
        out << e.field_a << ',' << e.field_b << ',' << e.strength << ',';
        for (size_t t = 0; t < e.eigenvalues.size(); ++t) {
            if (t) out << '|';
            out << e.eigenvalues[t];
        }
        out << '\n';
    }
}

inline void write_report_text(std::ostream& out, const PairStrengthReport& report) {
    size_t wa = 7, wb = 7;
    for (const auto& e : report.entries) {
        wa = std::max(wa, e.field_a.size());
        wb = std::max(wb, e.field_b.size());
    }
    char buf[64];
    for (const auto& e : report.entries) {
        std::snprintf(buf, sizeof(buf), "%12.6f", e.strength);
        out << e.field_a << std::string(wa + 2 - e.field_a.size(), ' ') << e.field_b
            << std::string(wb + 2 - e.field_b.size(), ' ') << buf << '\n';
    }
}

}  // namespace fefm
