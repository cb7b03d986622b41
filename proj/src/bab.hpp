#ifndef PROBVERIF_BAB_HPP
#define PROBVERIF_BAB_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lirpa.hpp"
#include "model.hpp"
#include "prob.hpp"
#include "split.hpp"

namespace pv {

// A subproblem: probability estimates for P[f(X) > 0, C], its constraint
// set, and the neuron marked for a future split. The events are retained so
// the branch can be re-estimated during confidence escalation; full linear
// bounds are discarded after marking.
struct Branch {
    ProbEstimate p_lower;
    ProbEstimate p_upper;
    ConstraintSet constraints;
    std::optional<std::pair<int, int>> marked_split;
    std::int64_t branch_id = 0;
    LinearEvent lower_event;
    LinearEvent upper_event;

    double gap() const { return p_upper.value - p_lower.value; }
};

// Candidate branches, popped by largest gap (ties: smaller branch_id).
class BranchPool {
  public:
    void insert(Branch branch);
    Branch pop_max_gap(); // error when empty
    const Branch& peek_max_gap() const;

    bool empty() const { return branches_.empty(); }
    std::size_t size() const { return branches_.size(); }
    const std::vector<Branch>& branches() const { return branches_; }
    std::vector<Branch>& branches() { return branches_; }

  private:
    std::size_t max_gap_index() const;
    std::vector<Branch> branches_; // kept in branch_id order
};

struct GlobalBounds {
    double lower = 0.0;
    double upper = 0.0;
};

// Kahan-compensated sums of the per-branch estimates, in branch_id order.
GlobalBounds bound_global_probability(const BranchPool& pool);

enum class Verdict { True, False, Timeout };

std::string verdict_name(Verdict v);

struct VerificationReport {
    Verdict verdict = Verdict::Timeout;
    double p_lower = 0.0;
    double p_upper = 0.0;
    double confidence = 0.0;
    std::int64_t splits = 0;
    std::int64_t branches_final = 0;
    double wall_time_s = 0.0;
    std::uint64_t seed = 0;
    std::string strategy;
    std::int64_t n_samples_final = 0;
    double eta = 0.0;

    // Stable, documented schema; wall time is the only volatile field and
    // can be omitted for byte-comparable output.
    std::string to_json(bool include_timing = true) const;
};

struct Budget {
    double time_limit_s = 0.0; // <= 0 means no limit
    std::int64_t n_samples = 100000;
    int split_depth = 1;
    int batch_size = 1;
    // Ceiling for confidence-escalation sample doubling; 0 means
    // 128 * n_samples. Keeps sub-target runs deterministic: escalation
    // stops at the cap, the verdict is reported with its achieved
    // confidence.
    std::int64_t max_samples = 0;
};

enum class StrategyKind { Ordered, BabsrProb };

std::string strategy_name(StrategyKind s);

// Observer payloads for logging and invariant monitoring.
struct IterationInfo {
    std::int64_t iteration = 0;
    GlobalBounds raw;     // plain sums over the pool
    double delta = 0.0;   // truncation deficit charged to the upper bound
    double p_lower = 0.0; // clamped verdict-side values
    double p_upper = 0.0;
    const BranchPool* pool = nullptr;
    std::optional<double> popped_gap; // gap of the branch popped this iteration
};

struct SplitDecision {
    std::int64_t branch_id = 0;
    SplitChoice choice;
    StrategyKind strategy = StrategyKind::Ordered;
    const LinearBoundsSet* bounds = nullptr;
    const ConstraintSet* constraints = nullptr;
};

struct EngineOptions {
    StrategyKind strategy = StrategyKind::Ordered;
    double tau = 0.01; // babsr-prob uncertainty threshold
    Budget budget;
    std::uint64_t seed = 0;
    double target_confidence = 1.0 - 1e-4;
    std::function<void(const IterationInfo&)> on_iteration;
    std::function<void(const SplitDecision&)> on_mark;
};

// Full branch-and-bound verification of P[f(X) > 0] >= eta.
VerificationReport verify(const ProblemInstance& problem, const EngineOptions& options);

// Root-branch bounding only; sound but incomplete. Undecided instances are
// reported as Timeout with zero splits.
VerificationReport verify_no_split(const ProblemInstance& problem, const Budget& budget,
                                   std::uint64_t seed);

// Everything a split needs besides the parent branch itself.
struct SplitContext {
    const Network* network = nullptr;
    const GaussianInput* gaussian = nullptr;
    const TruncationDomain* domain = nullptr;
    StrategyKind strategy = StrategyKind::Ordered;
    double tau = 0.01;
    std::int64_t n_samples = 100000;
    std::uint64_t run_seed = 0;
};

// Split a marked branch on its marked neuron: the children's constraint
// sets are parent's plus {y >= 0} / {y < 0}, each child gets fresh linear
// bounds, fresh shared-sample probability estimates, and its own mark when
// its gap is positive. The parent is consumed conceptually; callers insert
// the children and drop the parent.
std::pair<Branch, Branch> split_branch(const Branch& parent, const SplitContext& ctx,
                                       std::int64_t child_id_geq,
                                       std::int64_t child_id_lt);

} // namespace pv

#endif
