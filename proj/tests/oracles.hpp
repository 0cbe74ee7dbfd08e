// Independent reference computations used by the unit and acceptance tests.
// Nothing here calls into the eval module.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

using Matrix = std::vector<std::vector<std::uint64_t>>;

// ---- table search --------------------------------------------------------

// A printed cell in hundredths, e.g. 0.86 -> 86.
using Cell = int;

// num/den rounds half-up to `cell` hundredths; 0/0 reads as 0.
inline bool rounds_to(std::uint64_t num, std::uint64_t den, Cell cell) {
    if (den == 0) return cell == 0;
    // cell - 0.5 <= 100 num / den < cell + 0.5
    const auto lhs = static_cast<long double>(200) * num;
    return lhs >= static_cast<long double>(2 * cell - 1) * den && lhs < static_cast<long double>(2 * cell + 1) * den;
}

inline bool double_rounds_to(double x, Cell cell) {
    return x * 100.0 >= cell - 0.5 - 1e-9 && x * 100.0 < cell + 0.5 - 1e-9;
}

struct PrintedRow {
    Cell precision, recall, f1;
    std::uint64_t support;
};

struct PrintedTable {
    std::vector<PrintedRow> rows;
    Cell accuracy;
    Cell macro_p, macro_r, macro_f1;
    Cell weighted_p, weighted_r, weighted_f1;
};

// True when every printed cell is what `m` (rows gold, columns predicted) rounds to.
inline bool consistent(const Matrix &m, const PrintedTable &t) {
    const auto k = m.size();
    std::uint64_t total = 0, diag = 0;
    double mp = 0, mr = 0, mf = 0, wp = 0, wr = 0, wf = 0;
    for (std::size_t c = 0; c < k; ++c) {
        std::uint64_t row = 0, col = 0;
        for (std::size_t j = 0; j < k; ++j) {
            row += m[c][j];
            col += m[j][c];
        }
        const auto tp = m[c][c];
        if (row != t.rows[c].support) return false;
        if (!rounds_to(tp, col, t.rows[c].precision)) return false;
        if (!rounds_to(tp, row, t.rows[c].recall)) return false;
        // F1 = 2tp / (2tp + fp + fn)
        const auto f1_den = 2 * tp + (col - tp) + (row - tp);
        if (!rounds_to(2 * tp, f1_den, t.rows[c].f1)) return false;
        const double p = col ? double(tp) / double(col) : 0.0;
        const double r = row ? double(tp) / double(row) : 0.0;
        const double f = f1_den ? 2.0 * double(tp) / double(f1_den) : 0.0;
        mp += p;
        mr += r;
        mf += f;
        wp += p * double(row);
        wr += r * double(row);
        wf += f * double(row);
        total += row;
        diag += tp;
    }
    const double n = double(total), kk = double(k);
    return rounds_to(diag, total, t.accuracy) && double_rounds_to(mp / kk, t.macro_p) &&
           double_rounds_to(mr / kk, t.macro_r) && double_rounds_to(mf / kk, t.macro_f1) &&
           double_rounds_to(wp / n, t.weighted_p) && double_rounds_to(wr / n, t.weighted_r) &&
           double_rounds_to(wf / n, t.weighted_f1);
}

// Every matrix consistent with the printed table. Diagonals are pruned by the
// printed recall; off-diagonal mass is enumerated exhaustively.
inline std::vector<Matrix> search_tables(const PrintedTable &t) {
    const auto k = t.rows.size();
    std::vector<std::vector<std::vector<std::uint64_t>>> row_options(k);
    for (std::size_t c = 0; c < k; ++c) {
        const auto n = t.rows[c].support;
        for (std::uint64_t d = 0; d <= n; ++d) {
            if (!rounds_to(d, n, t.rows[c].recall)) continue;
            // distribute n - d over the k - 1 off-diagonal cells
            std::vector<std::uint64_t> row(k, 0);
            row[c] = d;
            std::function<void(std::size_t, std::uint64_t)> place = [&](std::size_t j, std::uint64_t left) {
                if (j == k) {
                    if (left == 0) row_options[c].push_back(row);
                    return;
                }
                if (j == c) return place(j + 1, left);
                for (std::uint64_t v = 0; v <= left; ++v) {
                    row[j] = v;
                    place(j + 1, left - v);
                }
                row[j] = 0;
            };
            place(0, n - d);
        }
    }
    std::vector<Matrix> found;
    Matrix m(k);
    std::function<void(std::size_t)> pick = [&](std::size_t c) {
        if (c == k) {
            if (consistent(m, t)) found.push_back(m);
            return;
        }
        for (const auto &row : row_options[c]) {
            m[c] = row;
            pick(c + 1);
        }
    };
    pick(0);
    return found;
}

// ---- per-class metrics by counting ----------------------------------------

struct Counted {
    double precision, recall, f1;
    std::uint64_t support;
};

// Expands the matrix into individual (gold, predicted) observations and tallies them.
inline std::vector<Counted> count_metrics(const Matrix &m) {
    const auto k = m.size();
    std::vector<std::pair<std::size_t, std::size_t>> obs;
    for (std::size_t g = 0; g < k; ++g) {
        for (std::size_t p = 0; p < k; ++p) {
            for (std::uint64_t i = 0; i < m[g][p]; ++i) obs.emplace_back(g, p);
        }
    }
    std::vector<Counted> out;
    for (std::size_t c = 0; c < k; ++c) {
        std::uint64_t tp = 0, fp = 0, fn = 0;
        for (const auto &[g, p] : obs) {
            if (g == c && p == c) ++tp;
            if (g != c && p == c) ++fp;
            if (g == c && p != c) ++fn;
        }
        Counted r{};
        r.support = tp + fn;
        r.precision = tp + fp ? double(tp) / double(tp + fp) : 0.0;
        r.recall = tp + fn ? double(tp) / double(tp + fn) : 0.0;
        r.f1 = 2 * tp + fp + fn ? 2.0 * double(tp) / double(2 * tp + fp + fn) : 0.0;
        out.push_back(r);
    }
    return out;
}

// ---- nominal Krippendorff alpha by pair enumeration ------------------------

// units[u][a] is annotator a's value on unit u, or nullopt when missing.
// Returns nullopt when alpha is undefined (no pairable values or no expected disagreement).
inline std::optional<double> brute_force_alpha(const std::vector<std::vector<std::optional<std::string>>> &units) {
    std::vector<std::vector<std::string>> pairable;
    std::vector<std::string> all;
    for (const auto &u : units) {
        std::vector<std::string> vals;
        for (const auto &v : u) {
            if (v) vals.push_back(*v);
        }
        if (vals.size() < 2) continue;
        pairable.push_back(vals);
        all.insert(all.end(), vals.begin(), vals.end());
    }
    const double n = double(all.size());
    if (n == 0) return std::nullopt;
    double observed = 0;
    for (const auto &vals : pairable) {
        double mismatched_pairs = 0;
        for (std::size_t i = 0; i < vals.size(); ++i) {
            for (std::size_t j = 0; j < vals.size(); ++j) {
                if (i != j && vals[i] != vals[j]) mismatched_pairs += 1;
            }
        }
        observed += mismatched_pairs / double(vals.size() - 1);
    }
    observed /= n;
    double expected = 0;
    for (std::size_t i = 0; i < all.size(); ++i) {
        for (std::size_t j = 0; j < all.size(); ++j) {
            if (i != j && all[i] != all[j]) expected += 1;
        }
    }
    expected /= n * (n - 1);
    if (expected == 0) return std::nullopt;
    return 1.0 - observed / expected;
}

}  // namespace oracle
