#include "pwlmdp/pwl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace pwlmdp {

namespace {

// Accumulates right-open pieces left to right; zero-length pieces are dropped.
class PieceBuilder {
public:
    explicit PieceBuilder(std::size_t reserve = 0) {
        breakpoints_.reserve(reserve + 1);
        slopes_.reserve(reserve);
        intercepts_.reserve(reserve);
        breakpoints_.push_back(0.0);
    }

    void push(double end, double slope, double intercept) {
        if (end <= breakpoints_.back()) return;
        breakpoints_.push_back(end);
        slopes_.push_back(slope);
        intercepts_.push_back(intercept);
    }

    PwlFunction finish() && {
        return PwlFunction(std::move(breakpoints_), std::move(slopes_), std::move(intercepts_));
    }

private:
    std::vector<double> breakpoints_;
    std::vector<double> slopes_;
    std::vector<double> intercepts_;
};

// Calls fn(l, r, i, j) for every interval of the common refinement of f and g.
template <class Fn>
void for_each_common_interval(const PwlFunction& f, const PwlFunction& g, Fn&& fn) {
    auto fx = f.breakpoints();
    auto gx = g.breakpoints();
    std::size_t i = 0;
    std::size_t j = 0;
    double l = 0.0;
    for (;;) {
        const double r = std::min(fx[i + 1], gx[j + 1]);
        fn(l, r, i, j);
        if (r >= 1.0) break;
        if (fx[i + 1] == r) ++i;
        if (gx[j + 1] == r) ++j;
        l = r;
    }
}

std::vector<double> union_breakpoints(std::span<const PwlFunction> fs) {
    std::vector<double> xs;
    std::size_t total = 0;
    for (const auto& f : fs) total += f.breakpoints().size();
    xs.reserve(total);
    for (const auto& f : fs) xs.insert(xs.end(), f.breakpoints().begin(), f.breakpoints().end());
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
    return xs;
}

bool ties_or_beats(double candidate, double best) {
    return candidate > best + 1e-13 * std::max(1.0, std::abs(best));
}

}  // namespace

PwlFunction::PwlFunction(std::vector<double> breakpoints, std::vector<double> slopes,
                         std::vector<double> intercepts)
    : breakpoints_(std::move(breakpoints)), slopes_(std::move(slopes)), intercepts_(std::move(intercepts)) {
    const std::size_t m = slopes_.size();
    if (m == 0) throw std::invalid_argument("PwlFunction needs at least one piece");
    if (intercepts_.size() != m || breakpoints_.size() != m + 1)
        throw std::invalid_argument("PwlFunction: need m+1 breakpoints and m slopes/intercepts");
    if (breakpoints_.front() != 0.0 || breakpoints_.back() != 1.0)
        throw std::invalid_argument("PwlFunction: breakpoints must start at 0 and end at 1");
    for (std::size_t i = 0; i < m; ++i) {
        if (!(breakpoints_[i] < breakpoints_[i + 1]))
            throw std::invalid_argument("PwlFunction: breakpoints not strictly ascending at index " +
                                        std::to_string(i));
        if (!std::isfinite(slopes_[i]) || !std::isfinite(intercepts_[i]))
            throw std::invalid_argument("PwlFunction: non-finite coefficient at piece " + std::to_string(i));
    }
}

PwlFunction PwlFunction::constant(double c) { return PwlFunction({0.0, 1.0}, {0.0}, {c}); }

PwlFunction PwlFunction::linear(double slope, double intercept) {
    return PwlFunction({0.0, 1.0}, {slope}, {intercept});
}

PwlFunction PwlFunction::interpolate(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size() || xs.size() < 2)
        throw std::invalid_argument("interpolate: need matching knot lists of length >= 2");
    std::vector<double> slopes;
    std::vector<double> intercepts;
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
        const double a = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]);
        slopes.push_back(a);
        intercepts.push_back(ys[i] - a * xs[i]);
    }
    return PwlFunction(std::vector<double>(xs.begin(), xs.end()), std::move(slopes), std::move(intercepts));
}

PwlFunction PwlFunction::step(std::span<const double> xs, std::span<const double> values) {
    if (xs.size() != values.size() + 1) throw std::invalid_argument("step: need one more breakpoint than values");
    return PwlFunction(std::vector<double>(xs.begin(), xs.end()), std::vector<double>(values.size(), 0.0),
                       std::vector<double>(values.begin(), values.end()));
}

std::size_t PwlFunction::piece_index(double s) const {
    auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), s);
    const auto idx = static_cast<std::ptrdiff_t>(it - breakpoints_.begin()) - 1;
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(idx, 0, static_cast<std::ptrdiff_t>(piece_count()) - 1));
}

double PwlFunction::operator()(double s) const {
    if (!(s >= 0.0 && s <= 1.0)) throw DomainError("PwlFunction evaluated outside [0,1]: " + std::to_string(s));
    const std::size_t i = piece_index(s);
    return slopes_[i] * s + intercepts_[i];
}

double eval(const PwlFunction& f, double s) { return f(s); }

PwlFunction compose(const PwlFunction& outer, const PwlFunction& inner) {
    auto ox = outer.breakpoints();
    auto oa = outer.slopes();
    auto ob = outer.intercepts();
    auto ix = inner.breakpoints();
    const auto om = static_cast<std::ptrdiff_t>(outer.piece_count());

    PieceBuilder out(inner.piece_count() + outer.piece_count());
    for (std::size_t i = 0; i < inner.piece_count(); ++i) {
        const double a = inner.slopes()[i];
        const double b = inner.intercepts()[i];
        const double xl = ix[i];
        const double xr = ix[i + 1];
        const double y0 = a * xl + b;
        const double y1 = a * xr + b;
        if (y0 < -kRangeSlack || y0 > 1.0 + kRangeSlack || y1 < -kRangeSlack || y1 > 1.0 + kRangeSlack)
            throw RangeError("compose: inner piece " + std::to_string(i) + " maps outside [0,1]");
        const double c0 = std::clamp(y0, 0.0, 1.0);
        const double c1 = std::clamp(y1, 0.0, 1.0);

        auto emit = [&](double end, std::ptrdiff_t j) {
            out.push(end, oa[j] * a, oa[j] * b + ob[j]);
        };

        if (a == 0.0 || c0 == c1) {
            emit(xr, static_cast<std::ptrdiff_t>(outer.piece_index(c0)));
            continue;
        }
        if (a > 0.0) {
            auto j = static_cast<std::ptrdiff_t>(outer.piece_index(c0));
            while (j + 1 < om && ox[j + 1] < c1) {
                const double cut = std::clamp((ox[j + 1] - b) / a, xl, xr);
                emit(cut, j);
                ++j;
            }
            emit(xr, j);
        } else {
            auto j = static_cast<std::ptrdiff_t>(std::lower_bound(ox.begin(), ox.end(), c0) - ox.begin()) - 1;
            j = std::clamp<std::ptrdiff_t>(j, 0, om - 1);
            while (j >= 1 && ox[j] > c1) {
                const double cut = std::clamp((ox[j] - b) / a, xl, xr);
                emit(cut, j);
                --j;
            }
            emit(xr, j);
        }
    }
    return simplify(std::move(out).finish());
}

PwlFunction affine_combine(const PwlFunction& f, const PwlFunction& g, double alpha, double beta) {
    PieceBuilder out(f.piece_count() + g.piece_count());
    for_each_common_interval(f, g, [&](double, double r, std::size_t i, std::size_t j) {
        out.push(r, alpha * f.slopes()[i] + beta * g.slopes()[j],
                 alpha * f.intercepts()[i] + beta * g.intercepts()[j]);
    });
    return simplify(std::move(out).finish());
}

PwlFunction pointwise_max(const PwlFunction& f, const PwlFunction& g) {
    const PwlFunction both[] = {f, g};
    return argmax_select(both).second;
}

PwlFunction simplify(const PwlFunction& f, double slope_tol, double value_tol, double min_len) {
    if (slope_tol < 0 || value_tol < 0 || min_len < 0) throw std::invalid_argument("simplify: negative tolerance");
    auto x = f.breakpoints();
    auto a = f.slopes();
    auto b = f.intercepts();
    const std::size_t m = f.piece_count();

    // Slivers shorter than min_len are absorbed by the previous piece (or the
    // next one when at the left edge).
    std::vector<double> ends;
    std::vector<std::size_t> src;
    ends.reserve(m);
    src.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
        const bool sliver = x[i + 1] - x[i] < min_len;
        if (sliver && !ends.empty()) {
            ends.back() = x[i + 1];
            continue;
        }
        if (sliver && i + 1 < m) continue;
        ends.push_back(x[i + 1]);
        src.push_back(i);
    }

    PieceBuilder out(src.size());
    std::size_t rep = src[0];
    double run_end = ends[0];
    for (std::size_t k = 1; k < src.size(); ++k) {
        const std::size_t p = src[k];
        const double lo = run_end;
        const double hi = ends[k];
        const double slope_gap = std::abs(a[p] - a[rep]);
        const bool mergeable = slope_gap <= slope_tol * std::max(1.0, std::abs(a[rep])) &&
                               std::abs((a[rep] - a[p]) * lo + (b[rep] - b[p])) <= value_tol &&
                               std::abs((a[rep] - a[p]) * hi + (b[rep] - b[p])) <= value_tol;
        if (mergeable) {
            run_end = hi;
            continue;
        }
        out.push(run_end, a[rep], b[rep]);
        rep = p;
        run_end = hi;
    }
    out.push(1.0, a[rep], b[rep]);
    return std::move(out).finish();
}

PwlFunction simplify(const PwlFunction& f, const Tolerances& tol) {
    return simplify(f, tol.slope, tol.value, tol.min_len);
}

std::size_t piece_count(const PwlFunction& f) { return f.piece_count(); }

double integrate(const PwlFunction& f) {
    auto x = f.breakpoints();
    double total = 0.0;
    for (std::size_t i = 0; i < f.piece_count(); ++i) {
        const double l = x[i];
        const double r = x[i + 1];
        total += 0.5 * f.slopes()[i] * (r - l) * (r + l) + f.intercepts()[i] * (r - l);
    }
    return total;
}

double sup_norm(const PwlFunction& f) {
    double best = 0.0;
    for (std::size_t i = 0; i < f.piece_count(); ++i)
        best = std::max({best, std::abs(f.left_value(i)), std::abs(f.right_limit(i))});
    return best;
}

double max_abs_slope(const PwlFunction& f) {
    double best = 0.0;
    for (double a : f.slopes()) best = std::max(best, std::abs(a));
    return best;
}

double max_jump(const PwlFunction& f) {
    double best = 0.0;
    for (std::size_t i = 0; i + 1 < f.piece_count(); ++i)
        best = std::max(best, std::abs(f.right_limit(i) - f.left_value(i + 1)));
    return best;
}

std::pair<PiecewisePolicy, PwlFunction> argmax_select(std::span<const PwlFunction> q) {
    if (q.empty()) throw std::invalid_argument("argmax_select: need at least one action");
    const std::size_t k = q.size();
    const std::vector<double> xs = union_breakpoints(q);

    std::vector<std::size_t> idx(k, 0);
    std::vector<double> slope(k);
    std::vector<double> icpt(k);
    std::vector<double> cuts;

    std::vector<double> pol_x{0.0};
    std::vector<Action> pol_a;
    PieceBuilder value(xs.size());

    for (std::size_t t = 0; t + 1 < xs.size(); ++t) {
        const double l = xs[t];
        const double r = xs[t + 1];
        for (std::size_t a = 0; a < k; ++a) {
            auto bx = q[a].breakpoints();
            while (bx[idx[a] + 1] <= l) ++idx[a];
            slope[a] = q[a].slopes()[idx[a]];
            icpt[a] = q[a].intercepts()[idx[a]];
        }
        cuts.clear();
        cuts.push_back(l);
        for (std::size_t p = 0; p < k; ++p)
            for (std::size_t u = p + 1; u < k; ++u) {
                const double da = slope[p] - slope[u];
                if (std::abs(da) < kParallelSlope) continue;
                const double xc = (icpt[u] - icpt[p]) / da;
                if (xc > l && xc < r) cuts.push_back(xc);
            }
        if (cuts.size() > 2) std::sort(cuts.begin() + 1, cuts.end());
        cuts.push_back(r);

        for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
            if (!(cuts[c + 1] > cuts[c])) continue;
            const double mid = 0.5 * (cuts[c] + cuts[c + 1]);
            Action best = 0;
            double best_v = slope[0] * mid + icpt[0];
            for (std::size_t a = 1; a < k; ++a) {
                const double v = slope[a] * mid + icpt[a];
                if (ties_or_beats(v, best_v)) {
                    best = a;
                    best_v = v;
                }
            }
            value.push(cuts[c + 1], slope[best], icpt[best]);
            if (!pol_a.empty() && pol_a.back() == best) {
                pol_x.back() = cuts[c + 1];
            } else {
                pol_a.push_back(best);
                pol_x.push_back(cuts[c + 1]);
            }
        }
    }
    return {PiecewisePolicy(std::move(pol_x), std::move(pol_a)).merged(kCanonical.min_len),
            simplify(std::move(value).finish())};
}

PwlFunction splice(const PiecewisePolicy& policy, std::span<const PwlFunction> per_action) {
    if (policy.max_action() >= per_action.size()) throw std::invalid_argument("splice: policy action out of range");
    auto px = policy.breakpoints();
    auto pa = policy.actions();
    PieceBuilder out;
    for (std::size_t t = 0; t < pa.size(); ++t) {
        const PwlFunction& f = per_action[pa[t]];
        const double l = px[t];
        const double r = px[t + 1];
        for (std::size_t i = f.piece_index(l); i < f.piece_count(); ++i) {
            const double end = std::min(f.breakpoints()[i + 1], r);
            out.push(end, f.slopes()[i], f.intercepts()[i]);
            if (end >= r) break;
        }
    }
    return simplify(std::move(out).finish());
}

nlohmann::json to_json(const PwlFunction& f) {
    return nlohmann::json{{"breakpoints", std::vector<double>(f.breakpoints().begin(), f.breakpoints().end())},
                          {"slopes", std::vector<double>(f.slopes().begin(), f.slopes().end())},
                          {"intercepts", std::vector<double>(f.intercepts().begin(), f.intercepts().end())}};
}

PwlFunction pwl_from_json(const nlohmann::json& j) {
    return PwlFunction(j.at("breakpoints").get<std::vector<double>>(), j.at("slopes").get<std::vector<double>>(),
                       j.at("intercepts").get<std::vector<double>>());
}

}  // namespace pwlmdp
