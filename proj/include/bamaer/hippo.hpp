#pragma once

#include <functional>
#include <iosfwd>
#include <filesystem>
#include <span>
#include <vector>

#include "bamaer/corpus.hpp"
#include "bamaer/rng.hpp"
#include "bamaer/tensor.hpp"
#include <json.hpp>

namespace bamaer {

class CandidateSetTooSmall : public Error {
public:
    CandidateSetTooSmall(std::size_t have, std::size_t need)
        : Error(ErrorClass::Validation, "candidate set has " + std::to_string(have) + " exercises, need " +
                                            std::to_string(need)) {}
};

struct HoConfig {
    std::size_t population = 50;  // N; first half river, second half defense
    std::size_t iterations = 200; // T
    std::size_t dimension = 5;    // list length
    double lower = 0.0;           // per-dimension bounds
    double upper = 1.0;
    double chaos_alpha = 1.0;
    std::size_t mean_subset = 5;  // individuals averaged for the river mean position
    std::uint64_t seed = 0;

    void validate() const;
};

nlohmann::json to_json(const HoConfig& cfg);
HoConfig ho_config_from_json(const nlohmann::json& j);

/// Maximized. Receives one position of length `dimension`.
using Objective = std::function<double(std::span<const double>)>;

struct HippoPopulation {
    Mat positions;  // N x d, one individual per row
    std::vector<double> fitness;
    Vec best;
    double best_fitness = 0.0;
};

// ---------------------------------------------------------------------------
// Pieces of one iteration, exposed for testing.

inline constexpr double kChaosFloor = 1e-6;

/// One step of the sine map: alpha * sin(pi / mu).
double sine_map(double mu, double alpha);

/// n values of the sine chaotic stream after mu0. Values below kChaosFloor in
/// magnitude are replaced by a fresh draw from U(-alpha, alpha) before use.
std::vector<double> sine_chaotic_stream(double mu0, double alpha, std::size_t n, Rng& rng);

HippoPopulation sine_chaotic_init(const HoConfig& cfg, const Objective& f, Rng& rng);

/// Mantegna's generator for a Levy-stable step.
double levy_step(Rng& rng, double beta = 1.5);

/// x + gamma (B - eta x)
Vec river_move(const Vec& x, const Vec& best, const Vec& gamma, int eta);
/// x + gamma (B - eta mean)
Vec river_mean_move(const Vec& x, const Vec& best, const Vec& mean, const Vec& gamma, int eta);
/// lb - gamma (ub - lb)
Vec predator_position(double lower, double upper, const Vec& gamma);
/// levy * predator + phi / dist when the predator is fitter, else levy * predator + phi / (2 dist + r4).
Vec defense_move(const Vec& levy, const Vec& predator, const Vec& phi, double dist, bool predator_fitter, double r4);

struct LocalBounds {
    double lower, upper;
};
/// lb / t and ub / t.
LocalBounds escape_bounds(double lower, double upper, std::size_t t);
/// x + gamma (ud - phi (ud - ld))
Vec escape_move(const Vec& x, const LocalBounds& local, const Vec& gamma, const Vec& phi);

inline constexpr double kPredatorDistanceFloor = 1e-9;

class HoEngine {
public:
    HoEngine(const HoConfig& cfg, Objective objective);

    const HoConfig& config() const noexcept { return cfg_; }
    const HippoPopulation& population() const noexcept { return pop_; }
    std::size_t evaluations() const noexcept { return evaluations_; }
    std::size_t iteration() const noexcept { return t_; }
    const std::vector<double>& trace() const noexcept { return trace_; }

    void river_phase();
    void defense_phase();
    void escape_phase();
    /// Runs the three phases and records the best fitness.
    void iterate();
    /// Runs the configured number of iterations; trace has iterations + 1 entries.
    void run(const std::function<void(const HoEngine&)>& on_iteration = {});

private:
    double evaluate(const Vec& x);
    void clamp(Vec& x) const;
    void offer(std::size_t i, Vec candidate);
    void refresh_best();

    HoConfig cfg_;
    Objective f_;
    std::vector<Rng> rngs_;  // one stream per individual
    HippoPopulation pop_;
    std::vector<double> trace_;
    std::size_t evaluations_ = 0;
    std::size_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Exercise lists.

/// Euclidean distance between coverage vectors.
double pair_fitness(const Exercise& a, const Exercise& b);
/// Sum of pair_fitness over unordered pairs.
double list_fitness(std::span<const ExerciseId> list, const ExerciseBank& bank);

/// Maps each coordinate to floor((x - lb) / (ub - lb) * n), clamped, and moves
/// repeated indices forward cyclically to the next unused one.
std::vector<std::size_t> decode_indices(std::span<const double> position, double lower, double upper, std::size_t n);
std::vector<ExerciseId> decode_position(std::span<const double> position, std::span<const ExerciseId> candidates,
                                        double lower, double upper);

struct ErHoResult {
    std::vector<ExerciseId> list;
    double fitness = 0.0;
    std::vector<double> trace;
    std::size_t evaluations = 0;
};

ErHoResult run_er_ho(std::span<const ExerciseId> candidates, const ExerciseBank& bank, const HoConfig& cfg);

// ho_trace.csv: iteration,best_fitness
void write_ho_trace(std::span<const double> trace, std::ostream& out);
void save_ho_trace(std::span<const double> trace, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Continuous benchmarks (minimized; the engine maximizes the negation).

double sphere(std::span<const double> x);
double rastrigin(std::span<const double> x);

struct BenchRun {
    double initial_best = 0.0;       // objective value, lower is better
    double final_best = 0.0;
    std::vector<double> trace;       // objective value per iteration
    std::size_t evaluations = 0;
    double random_search_best = 0.0; // same evaluation budget
};

BenchRun run_benchmark(const std::function<double(std::span<const double>)>& fn, const HoConfig& cfg);

/// Best value of `evaluations` uniform samples in [lower, upper]^dimension.
double random_search(const std::function<double(std::span<const double>)>& fn, std::size_t dimension, double lower,
                     double upper, std::size_t evaluations, std::uint64_t seed);

}  // namespace bamaer
