#include <algorithm>
#include <cmath>
#include <limits>

#include "wsd/eval/assignment.hpp"
#include "wsd/eval/metrics.hpp"

namespace wsd::eval {

namespace {

Point stem_or_center(const Prediction& p) { return p.stem.value_or(p.bbox.center()); }
Point stem_or_center(const LabeledInstance& t) { return t.stem.value_or(t.bbox.center()); }

double pair_distance(const Prediction& p, const LabeledInstance& t) {
    return is_weed_pair(p, t) ? distance(stem_or_center(p), stem_or_center(t)) : 0.0;
}

constexpr int kNone = std::numeric_limits<int>::max();

}  // namespace

bool feasible(const Prediction& p, const LabeledInstance& t, double iou_floor) {
    return iou(p.bbox, t.bbox) >= iou_floor;
}

bool is_weed_pair(const Prediction& p, const LabeledInstance& t) {
    return p.class_id == data::ClassId::weed && t.is_weed();
}

MatchScore score(std::span<const MatchPair> pairs, std::span<const Prediction> predictions,
                 std::span<const LabeledInstance> truths) {
    MatchScore s;
    for (const auto& pr : pairs) {
        const auto& p = predictions[static_cast<std::size_t>(pr.prediction)];
        const auto& t = truths[static_cast<std::size_t>(pr.truth)];
        ++s.pairs;
        if (p.class_id == t.class_id) ++s.agreeing;
        s.stem_distance += pair_distance(p, t);
    }
    return s;
}

int compare(const MatchScore& a, const MatchScore& b) {
    if (a.pairs != b.pairs) return a.pairs > b.pairs ? -1 : 1;
    if (a.agreeing != b.agreeing) return a.agreeing > b.agreeing ? -1 : 1;
    const double tol = 1e-9 * (1.0 + std::max(a.stem_distance, b.stem_distance));
    if (std::abs(a.stem_distance - b.stem_distance) <= tol) return 0;
    return a.stem_distance < b.stem_distance ? -1 : 1;
}

MatchingResult match(std::span<const Prediction> predictions, std::span<const LabeledInstance> truths,
                     double iou_floor) {
    MatchingResult result;
    result.iou_floor = iou_floor;
    const int P = static_cast<int>(predictions.size());
    const int G = static_cast<int>(truths.size());

    // Only candidates with at least one feasible partner take part.
    std::vector<int> rp, rt;
    std::vector<char> ok(static_cast<std::size_t>(P) * G, 0);
    std::vector<char> truth_used(static_cast<std::size_t>(G), 0);
    for (int i = 0; i < P; ++i) {
        bool any = false;
        for (int j = 0; j < G; ++j) {
            if (feasible(predictions[i], truths[j], iou_floor)) {
                ok[static_cast<std::size_t>(i) * G + j] = 1;
                truth_used[j] = 1;
                any = true;
            }
        }
        if (any) rp.push_back(i);
    }
    for (int j = 0; j < G; ++j) {
        if (truth_used[j]) rt.push_back(j);
    }

    std::vector<int> choice(static_cast<std::size_t>(P), kNone);
    const int p = static_cast<int>(rp.size());
    const int g = static_cast<int>(rt.size());
    if (p > 0) {
        double d_total = 1.0;
        for (int a = 0; a < p; ++a) {
            for (int b = 0; b < g; ++b) {
                if (ok[static_cast<std::size_t>(rp[a]) * G + rt[b]]) {
                    d_total += pair_distance(predictions[rp[a]], truths[rt[b]]);
                }
            }
        }
        const int n = p + g;
        const double m2 = d_total;
        const double m1 = (std::min(p, g) + 1) * m2 + 1.0;
        const double big = 4.0 * n * (m1 + m2 + d_total);

        std::vector<double> base(static_cast<std::size_t>(n) * n, 0.0);
        for (int a = 0; a < p; ++a) {
            for (int b = 0; b < g; ++b) {
                const auto& pr = predictions[rp[a]];
                const auto& tr = truths[rt[b]];
                base[static_cast<std::size_t>(a) * n + b] =
                    ok[static_cast<std::size_t>(rp[a]) * G + rt[b]]
                        ? -m1 - (pr.class_id == tr.class_id ? m2 : 0.0) + pair_distance(pr, tr)
                        : big;
            }
        }
        std::vector<char> banned(base.size(), 0);

        auto solve = [&](std::vector<int>& local) {
            std::vector<double> cost = base;
            for (std::size_t k = 0; k < cost.size(); ++k) {
                if (banned[k]) cost[k] = big;
            }
            const auto assign = solve_assignment(cost, n);
            local.assign(static_cast<std::size_t>(p), -1);
            std::vector<MatchPair> pairs;
            for (int a = 0; a < p; ++a) {
                const int b = assign[static_cast<std::size_t>(a)];
                if (b < g && cost[static_cast<std::size_t>(a) * n + b] < big) {
                    local[static_cast<std::size_t>(a)] = b;
                    pairs.push_back({rp[a], rt[b]});
                }
            }
            return score(pairs, predictions, truths);
        };
        auto fix = [&](int a, int b) {
            for (int c = 0; c < n; ++c) {
                if (b >= 0) {
                    if (c != b) banned[static_cast<std::size_t>(a) * n + c] = 1;
                    if (c != a) banned[static_cast<std::size_t>(c) * n + b] = 1;
                } else if (c < g) {
                    banned[static_cast<std::size_t>(a) * n + c] = 1;
                }
            }
        };

        std::vector<int> current;
        const MatchScore best = solve(current);
        std::vector<char> taken(static_cast<std::size_t>(g), 0);
        for (int a = 0; a < p; ++a) {
            const int cur = current[static_cast<std::size_t>(a)];
            int chosen = cur;
            for (int b = 0; b < (cur < 0 ? g : cur); ++b) {
                if (taken[b] || !ok[static_cast<std::size_t>(rp[a]) * G + rt[b]]) continue;
                const auto saved = banned;
                fix(a, b);
                std::vector<int> trial;
                if (compare(solve(trial), best) == 0) {
                    chosen = b;
                    current = std::move(trial);
                    break;
                }
                banned = saved;
            }
            if (chosen == cur) fix(a, cur);
            if (chosen >= 0) {
                taken[chosen] = 1;
                choice[static_cast<std::size_t>(rp[a])] = rt[chosen];
            }
        }
    }

    std::vector<char> matched_truth(static_cast<std::size_t>(G), 0);
    for (int i = 0; i < P; ++i) {
        if (choice[i] == kNone) {
            result.unmatched_predictions.push_back(i);
        } else {
            result.pairs.push_back({i, choice[i]});
            matched_truth[choice[i]] = 1;
        }
    }
    for (int j = 0; j < G; ++j) {
        if (!matched_truth[j]) result.unmatched_truths.push_back(j);
    }
    return result;
}

std::vector<double> stem_errors(const MatchingResult& m, std::span<const Prediction> predictions,
                                std::span<const LabeledInstance> truths) {
    std::vector<double> out;
    for (const auto& pr : m.pairs) {
        const auto& p = predictions[static_cast<std::size_t>(pr.prediction)];
        const auto& t = truths[static_cast<std::size_t>(pr.truth)];
        if (is_weed_pair(p, t)) out.push_back(distance(stem_or_center(p), stem_or_center(t)));
    }
    return out;
}

std::optional<double> dist_metric(const MatchingResult& m, std::span<const Prediction> predictions,
                                  std::span<const LabeledInstance> truths) {
    const auto errors = stem_errors(m, predictions, truths);
    if (errors.empty()) return std::nullopt;
    double sum = 0.0;
    for (double e : errors) sum += e;
    return sum / static_cast<double>(errors.size());
}

CropConfusion crop_confusion(const MatchingResult& m, std::span<const Prediction> predictions,
                             std::span<const LabeledInstance> truths) {
    CropConfusion c;
    for (const auto& t : truths) {
        if (!t.is_weed()) ++c.crops;
    }
    for (const auto& pr : m.pairs) {
        if (!truths[static_cast<std::size_t>(pr.truth)].is_weed() &&
            predictions[static_cast<std::size_t>(pr.prediction)].class_id == data::ClassId::weed) {
            ++c.crops_as_weed;
        }
    }
    return c;
}

double fp_rate(const MatchingResult& m, std::span<const Prediction> predictions,
               std::span<const LabeledInstance> truths) {
    const auto c = crop_confusion(m, predictions, truths);
    return c.crops > 0 ? static_cast<double>(c.crops_as_weed) / c.crops : 0.0;
}

}  // namespace wsd::eval
