#include "bamaer/hippo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <limits>
#include <numeric>
#include <ostream>

#include "bamaer/format.hpp"

namespace bamaer {

void HoConfig::validate() const {
    if (population < 2) throw ConfigError("ho: population must be at least 2");
    if (dimension == 0) throw ConfigError("ho: dimension must be positive");
    if (!(lower < upper) || !std::isfinite(lower) || !std::isfinite(upper)) throw ConfigError("ho: need lower < upper");
    if (!(chaos_alpha > 0.0 && chaos_alpha <= 1.0)) throw ConfigError("ho: chaos_alpha must be in (0,1]");
    if (mean_subset == 0) throw ConfigError("ho: mean_subset must be positive");
}

nlohmann::json to_json(const HoConfig& c) {
    return {{"population", c.population}, {"iterations", c.iterations}, {"dimension", c.dimension},
            {"lower", c.lower},           {"upper", c.upper},           {"chaos_alpha", c.chaos_alpha},
            {"mean_subset", c.mean_subset}, {"seed", c.seed}};
}

HoConfig ho_config_from_json(const nlohmann::json& j) {
    HoConfig c;
    c.population = j.at("population");
    c.iterations = j.at("iterations");
    c.dimension = j.at("dimension");
    c.lower = j.at("lower");
    c.upper = j.at("upper");
    c.chaos_alpha = j.at("chaos_alpha");
    c.mean_subset = j.at("mean_subset");
    c.seed = j.at("seed");
    return c;
}

// ---------------------------------------------------------------------------

double sine_map(double mu, double alpha) { return alpha * std::sin(std::numbers::pi / mu); }

namespace {

double draw_chaos_seed(double alpha, Rng& rng) {
    double mu = 0.0;
    while (std::abs(mu) < kChaosFloor) mu = uniform(rng, -alpha, alpha);
    return mu;
}

Vec uniform_vec(Rng& rng, Eigen::Index n, double lo, double hi) {
    Vec v(n);
    for (auto& x : v) x = uniform(rng, lo, hi);
    return v;
}

}  // namespace

std::vector<double> sine_chaotic_stream(double mu0, double alpha, std::size_t n, Rng& rng) {
    std::vector<double> out;
    out.reserve(n);
    double mu = std::abs(mu0) < kChaosFloor ? draw_chaos_seed(alpha, rng) : mu0;
    for (std::size_t i = 0; i < n; ++i) {
        double next = sine_map(mu, alpha);
        if (std::abs(next) < kChaosFloor) next = draw_chaos_seed(alpha, rng);
        out.push_back(next);
        mu = next;
    }
    return out;
}

HippoPopulation sine_chaotic_init(const HoConfig& cfg, const Objective& f, Rng& rng) {
    const auto n = Eigen::Index(cfg.population), d = Eigen::Index(cfg.dimension);
    HippoPopulation pop;
    pop.positions.resize(n, d);
    const double a = cfg.chaos_alpha;
    for (Eigen::Index j = 0; j < d; ++j) {
        auto stream = sine_chaotic_stream(draw_chaos_seed(a, rng), a, cfg.population, rng);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double unit = (stream[std::size_t(i)] + a) / (2.0 * a);
            pop.positions(i, j) = std::clamp(cfg.lower + unit * (cfg.upper - cfg.lower), cfg.lower, cfg.upper);
        }
    }
    pop.fitness.resize(cfg.population);
    std::vector<double> row(cfg.dimension);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) row[std::size_t(j)] = pop.positions(i, j);
        pop.fitness[std::size_t(i)] = f(row);
    }
    const auto best = std::size_t(std::max_element(pop.fitness.begin(), pop.fitness.end()) - pop.fitness.begin());
    pop.best = pop.positions.row(Eigen::Index(best)).transpose();
    pop.best_fitness = pop.fitness[best];
    return pop;
}

double levy_step(Rng& rng, double beta) {
    const double sigma_u = std::pow(std::tgamma(1.0 + beta) * std::sin(std::numbers::pi * beta / 2.0) /
                                        (std::tgamma((1.0 + beta) / 2.0) * beta * std::pow(2.0, (beta - 1.0) / 2.0)),
                                    1.0 / beta);
    const double u = normal(rng, 0.0, sigma_u);
    double v = 0.0;
    while (v == 0.0) v = normal(rng);
    return u / std::pow(std::abs(v), 1.0 / beta);
}

Vec river_move(const Vec& x, const Vec& best, const Vec& gamma, int eta) {
    return x + gamma.cwiseProduct(best - double(eta) * x);
}

Vec river_mean_move(const Vec& x, const Vec& best, const Vec& mean, const Vec& gamma, int eta) {
    return x + gamma.cwiseProduct(best - double(eta) * mean);
}

Vec predator_position(double lower, double upper, const Vec& gamma) {
    return (lower - gamma.array() * (upper - lower)).matrix();
}

Vec defense_move(const Vec& levy, const Vec& predator, const Vec& phi, double dist, bool predator_fitter, double r4) {
    const double denom = predator_fitter ? dist : 2.0 * dist + r4;
    return levy.cwiseProduct(predator) + phi / denom;
}

LocalBounds escape_bounds(double lower, double upper, std::size_t t) {
    if (t == 0) throw ConfigError("escape iteration counter starts at 1");
    return {lower / double(t), upper / double(t)};
}

Vec escape_move(const Vec& x, const LocalBounds& local, const Vec& gamma, const Vec& phi) {
    const double span = local.upper - local.lower;
    return x + gamma.cwiseProduct((local.upper - phi.array() * span).matrix());
}

// ---------------------------------------------------------------------------

HoEngine::HoEngine(const HoConfig& cfg, Objective objective) : cfg_(cfg), f_(std::move(objective)) {
    cfg_.validate();
    for (std::size_t i = 0; i < cfg_.population; ++i) rngs_.emplace_back(derive_seed(cfg_.seed, std::uint64_t(i)));
    Rng init(derive_seed(cfg_.seed, "init"));
    pop_ = sine_chaotic_init(cfg_, f_, init);
    evaluations_ = cfg_.population;
    trace_.push_back(pop_.best_fitness);
}

double HoEngine::evaluate(const Vec& x) {
    ++evaluations_;
    return f_(std::span<const double>(x.data(), std::size_t(x.size())));
}

void HoEngine::clamp(Vec& x) const {
    for (auto& v : x) v = std::isfinite(v) ? std::clamp(v, cfg_.lower, cfg_.upper) : cfg_.lower;
}

void HoEngine::offer(std::size_t i, Vec candidate) {
    clamp(candidate);
    const double fit = evaluate(candidate);
    if (fit > pop_.fitness[i]) {
        pop_.positions.row(Eigen::Index(i)) = candidate.transpose();
        pop_.fitness[i] = fit;
    }
}

void HoEngine::river_phase() {
    const auto d = Eigen::Index(cfg_.dimension);
    const std::size_t half = cfg_.population / 2;
    const std::size_t subset = std::min(cfg_.mean_subset, cfg_.population);
    std::vector<std::size_t> idx(cfg_.population);
    for (std::size_t i = 0; i < half; ++i) {
        auto& rng = rngs_[i];
        Vec x = pop_.positions.row(Eigen::Index(i)).transpose();
        Vec gamma = uniform_vec(rng, d, 0.0, 1.0);
        const int eta = int(1 + uniform_index(rng, 2));
        offer(i, river_move(x, pop_.best, gamma, eta));

        std::iota(idx.begin(), idx.end(), std::size_t{0});
        Vec mean = Vec::Zero(d);
        for (std::size_t k = 0; k < subset; ++k) {
            const auto pick = k + uniform_index(rng, cfg_.population - k);
            std::swap(idx[k], idx[pick]);
            mean += pop_.positions.row(Eigen::Index(idx[k])).transpose();
        }
        mean /= double(subset);
        x = pop_.positions.row(Eigen::Index(i)).transpose();
        gamma = uniform_vec(rng, d, 0.0, 1.0);
        const int eta2 = int(1 + uniform_index(rng, 2));
        offer(i, river_mean_move(x, pop_.best, mean, gamma, eta2));
    }
}

void HoEngine::defense_phase() {
    const auto d = Eigen::Index(cfg_.dimension);
    for (std::size_t i = cfg_.population / 2; i < cfg_.population; ++i) {
        auto& rng = rngs_[i];
        Vec x = pop_.positions.row(Eigen::Index(i)).transpose();
        Vec predator = predator_position(cfg_.lower, cfg_.upper, uniform_vec(rng, d, 0.0, 1.0));
        const double predator_fit = evaluate(predator);
        const double dist = std::max((x - predator).norm(), kPredatorDistanceFloor);
        Vec levy(d);
        for (auto& l : levy) l = levy_step(rng);
        Vec phi = uniform_vec(rng, d, -2.0, 2.0);
        const double r4 = uniform01(rng);
        offer(i, defense_move(levy, predator, phi, dist, predator_fit > pop_.fitness[i], r4));
    }
}

void HoEngine::escape_phase() {
    const auto d = Eigen::Index(cfg_.dimension);
    const auto local = escape_bounds(cfg_.lower, cfg_.upper, t_ + 1);
    for (std::size_t i = 0; i < cfg_.population; ++i) {
        auto& rng = rngs_[i];
        Vec x = pop_.positions.row(Eigen::Index(i)).transpose();
        Vec gamma = uniform_vec(rng, d, 0.0, 1.0);
        Vec phi = uniform_vec(rng, d, -1.0, 1.0);
        offer(i, escape_move(x, local, gamma, phi));
    }
}

void HoEngine::refresh_best() {
    for (std::size_t i = 0; i < cfg_.population; ++i) {
        if (pop_.fitness[i] > pop_.best_fitness) {
            pop_.best_fitness = pop_.fitness[i];
            pop_.best = pop_.positions.row(Eigen::Index(i)).transpose();
        }
    }
}

void HoEngine::iterate() {
    river_phase();
    defense_phase();
    escape_phase();
    ++t_;
    refresh_best();
    trace_.push_back(pop_.best_fitness);
}

void HoEngine::run(const std::function<void(const HoEngine&)>& on_iteration) {
    while (t_ < cfg_.iterations) {
        iterate();
        if (on_iteration) on_iteration(*this);
    }
}

// ---------------------------------------------------------------------------

double pair_fitness(const Exercise& a, const Exercise& b) {
    if (a.kc_vector().size() != b.kc_vector().size()) throw ShapeMismatch("pair_fitness coverage lengths");
    // binary vectors: squared distance is the size of the symmetric difference
    const auto& x = a.concepts();
    const auto& y = b.concepts();
    std::size_t shared = 0;
    for (std::size_t i = 0, j = 0; i < x.size() && j < y.size();) {
        if (x[i] == y[j]) {
            ++shared;
            ++i;
            ++j;
        } else if (x[i] < y[j]) {
            ++i;
        } else {
            ++j;
        }
    }
    return std::sqrt(double(x.size() + y.size() - 2 * shared));
}

double list_fitness(std::span<const ExerciseId> list, const ExerciseBank& bank) {
    double total = 0.0;
    for (std::size_t i = 0; i < list.size(); ++i) {
        for (std::size_t j = i + 1; j < list.size(); ++j) {
            if (list[i] != list[j]) total += pair_fitness(bank.at(list[i]), bank.at(list[j]));
        }
    }
    return total;
}

std::vector<std::size_t> decode_indices(std::span<const double> position, double lower, double upper, std::size_t n) {
    if (n < position.size() || n == 0) throw CandidateSetTooSmall(n, std::max<std::size_t>(position.size(), 1));
    std::vector<bool> used(n, false);
    std::vector<std::size_t> out;
    out.reserve(position.size());
    for (double x : position) {
        double scaled = std::isfinite(x) ? std::floor((x - lower) / (upper - lower) * double(n)) : 0.0;
        auto idx = std::size_t(std::clamp(scaled, 0.0, double(n - 1)));
        while (used[idx]) idx = (idx + 1) % n;
        used[idx] = true;
        out.push_back(idx);
    }
    return out;
}

std::vector<ExerciseId> decode_position(std::span<const double> position, std::span<const ExerciseId> candidates,
                                        double lower, double upper) {
    std::vector<ExerciseId> out;
    for (auto i : decode_indices(position, lower, upper, candidates.size())) out.push_back(candidates[i]);
    return out;
}

ErHoResult run_er_ho(std::span<const ExerciseId> candidates, const ExerciseBank& bank, const HoConfig& cfg) {
    cfg.validate();
    if (candidates.size() < cfg.dimension || candidates.empty()) throw CandidateSetTooSmall(candidates.size(), cfg.dimension);
    for (auto id : candidates) bank.at(id);
    std::vector<ExerciseId> scratch;
    auto objective = [&](std::span<const double> x) {
        scratch = decode_position(x, candidates, cfg.lower, cfg.upper);
        return list_fitness(scratch, bank);
    };
    HoEngine engine(cfg, objective);
    engine.run();
    const auto& best = engine.population().best;
    ErHoResult result;
    result.list = decode_position(std::span<const double>(best.data(), std::size_t(best.size())), candidates, cfg.lower,
                                  cfg.upper);
    result.fitness = engine.population().best_fitness;
    result.trace = engine.trace();
    result.evaluations = engine.evaluations();
    return result;
}

void write_ho_trace(std::span<const double> trace, std::ostream& out) {
    out << "iteration,best_fitness\n";
    for (std::size_t i = 0; i < trace.size(); ++i) out << i << ',' << format_double(trace[i]) << '\n';
}

void save_ho_trace(std::span<const double> trace, const std::filesystem::path& path) {
    auto out = open_output(path);
    write_ho_trace(trace, out);
    finish_output(out, path);
}

// ---------------------------------------------------------------------------

double sphere(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return s;
}

double rastrigin(std::span<const double> x) {
    double s = 10.0 * double(x.size());
    for (double v : x) s += v * v - 10.0 * std::cos(2.0 * std::numbers::pi * v);
    return s;
}

double random_search(const std::function<double(std::span<const double>)>& fn, std::size_t dimension, double lower,
                     double upper, std::size_t evaluations, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> x(dimension);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t e = 0; e < evaluations; ++e) {
        for (auto& v : x) v = uniform(rng, lower, upper);
        best = std::min(best, fn(x));
    }
    return best;
}

BenchRun run_benchmark(const std::function<double(std::span<const double>)>& fn, const HoConfig& cfg) {
    HoEngine engine(cfg, [&](std::span<const double> x) {
        // out-of-bounds predator positions are scored like any other point
        return -fn(x);
    });
    engine.run();
    BenchRun out;
    for (double v : engine.trace()) out.trace.push_back(-v);
    out.initial_best = out.trace.front();
    out.final_best = out.trace.back();
    out.evaluations = engine.evaluations();
    out.random_search_best =
        random_search(fn, cfg.dimension, cfg.lower, cfg.upper, out.evaluations, derive_seed(cfg.seed, "random-search"));
    return out;
}

}  // namespace bamaer
