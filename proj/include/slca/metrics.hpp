#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "slca/errors.hpp"
#include "slca/tensor.hpp"

namespace slca {

struct Metrics {
    double accuracy = 0.0;
    double auc_macro_ovr = 0.0;
    double loss = 0.0;
};

// Fraction of argmax matches; ties broken toward the lowest class index.
template <typename T>
double accuracy(const Tensor<T>& logits, const std::vector<int>& labels) {
    const int N = logits.n(), K = logits.d[1];
    if (N < 1 || static_cast<int>(labels.size()) != N)
        throw ShapeError("accuracy: labels size != batch");
    int correct = 0;
    for (int n = 0; n < N; ++n) {
        const T* row = logits.data() + static_cast<std::size_t>(n) * K;
        int best = 0;
        for (int k = 1; k < K; ++k)
            if (row[k] > row[best]) best = k;
        if (best == labels[n]) ++correct;
    }
    return static_cast<double>(correct) / N;
}

struct AucDetail {
    double value = 0.0;
    std::vector<int> skipped_classes;
};

// Macro one-vs-rest AUC via rank statistics (Mann-Whitney), ties counting
// one half. Classes without both a positive and a negative are skipped and
// recorded; if every class is skipped the metric is undefined.
template <typename T>
AucDetail auc_macro_ovr_detail(const Tensor<T>& scores, const std::vector<int>& labels) {
    const int N = scores.n(), K = scores.d[1];
    if (N < 1 || static_cast<int>(labels.size()) != N)
        throw ShapeError("auc_macro_ovr: labels size != batch");
    AucDetail out;
    double sum = 0.0;
    int included = 0;
    std::vector<int> order(N);
    std::vector<double> col(N), rank(N);
    for (int k = 0; k < K; ++k) {
        long long npos = 0;
        for (int n = 0; n < N; ++n) {
            col[n] = static_cast<double>(scores.at(n, k));
            if (labels[n] == k) ++npos;
        }
        const long long nneg = N - npos;
        if (npos == 0 || nneg == 0) {
            out.skipped_classes.push_back(k);
            continue;
        }
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return col[a] < col[b]; });
        // Average ranks (1-based) over tie groups.
        int i = 0;
        while (i < N) {
            int j = i;
            while (j + 1 < N && col[order[j + 1]] == col[order[i]]) ++j;
            const double avg = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
            for (int t = i; t <= j; ++t) rank[order[t]] = avg;
            i = j + 1;
        }
        double rank_pos = 0.0;
        for (int n = 0; n < N; ++n)
            if (labels[n] == k) rank_pos += rank[n];
        const double auc = (rank_pos - 0.5 * static_cast<double>(npos) * (npos + 1)) /
                           (static_cast<double>(npos) * static_cast<double>(nneg));
        sum += auc;
        ++included;
    }
    if (included == 0) throw NumericError("auc_macro_ovr: every class skipped, metric undefined");
    out.value = sum / included;
    return out;
}

template <typename T>
double auc_macro_ovr(const Tensor<T>& scores, const std::vector<int>& labels) {
    return auc_macro_ovr_detail(scores, labels).value;
}

}  // namespace slca
