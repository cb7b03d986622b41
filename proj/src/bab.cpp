#include "bab.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "error.hpp"
#include "rng.hpp"

namespace pv {

void BranchPool::insert(Branch branch) {
    if (!branches_.empty() && branch.branch_id <= branches_.back().branch_id)
        throw Error(ErrorCode::Internal, "branch ids must be inserted in order");
    branches_.push_back(std::move(branch));
}

std::size_t BranchPool::max_gap_index() const {
    if (branches_.empty())
        throw Error(ErrorCode::InvalidArgument, "branch pool is empty");
    std::size_t best = 0;
    for (std::size_t i = 1; i < branches_.size(); ++i)
        if (branches_[i].gap() > branches_[best].gap())
            best = i; // strict '>' keeps the smaller id on ties
    return best;
}

const Branch& BranchPool::peek_max_gap() const { return branches_[max_gap_index()]; }

Branch BranchPool::pop_max_gap() {
    const std::size_t i = max_gap_index();
    Branch out = std::move(branches_[i]);
    branches_.erase(branches_.begin() + static_cast<std::ptrdiff_t>(i));
    return out;
}

GlobalBounds bound_global_probability(const BranchPool& pool) {
    if (pool.empty())
        throw Error(ErrorCode::InvalidArgument, "branch pool is empty");
    KahanSum lower, upper;
    for (const Branch& b : pool.branches()) {
        lower.add(b.p_lower.value);
        upper.add(b.p_upper.value);
    }
    return {lower.value(), upper.value()};
}

std::string verdict_name(Verdict v) {
    switch (v) {
    case Verdict::True: return "TRUE";
    case Verdict::False: return "FALSE";
    case Verdict::Timeout: return "TIMEOUT";
    }
    return "TIMEOUT";
}

std::string strategy_name(StrategyKind s) {
    return s == StrategyKind::Ordered ? "ordered" : "babsr-prob";
}

std::string VerificationReport::to_json(bool include_timing) const {
    nlohmann::json j;
    j["verdict"] = verdict_name(verdict);
    j["P_lower"] = p_lower;
    j["P_upper"] = p_upper;
    j["confidence"] = confidence;
    j["splits"] = splits;
    j["branches_final"] = branches_final;
    j["seed"] = seed;
    j["strategy"] = strategy;
    j["n_samples_final"] = n_samples_final;
    j["eta"] = eta;
    if (include_timing)
        j["wall_time_s"] = wall_time_s;
    return j.dump(2);
}

namespace {

using Clock = std::chrono::steady_clock;

double clamp01(double x) { return std::min(1.0, std::max(0.0, x)); }

// Runs fn over every index with up to `workers` threads. Results land in
// caller-visible slots by index, so the outcome is schedule-independent.
template <typename Fn>
void parallel_for(std::size_t count, int workers, Fn&& fn) {
    if (count == 0)
        return;
    const std::size_t nthreads =
        std::min<std::size_t>(std::max(workers, 1), count);
    if (nthreads <= 1) {
        for (std::size_t i = 0; i < count; ++i)
            fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(count);
    auto body = [&] {
        for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> threads;
    threads.reserve(nthreads - 1);
    for (std::size_t t = 0; t + 1 < nthreads; ++t)
        threads.emplace_back(body);
    body();
    for (std::thread& t : threads)
        t.join();
    for (const std::exception_ptr& e : errors)
        if (e)
            std::rethrow_exception(e);
}

struct NodeEval {
    Branch branch;                 // estimates filled only for leaves
    bool is_leaf = true;
    std::optional<std::pair<int, int>> split_on; // for intermediates
    int unstable_count = 0;
};

struct EvalContext {
    const Network* net = nullptr;
    const GaussianInput* gaussian = nullptr;
    const TruncationDomain* domain = nullptr;
    StrategyKind strategy = StrategyKind::Ordered;
    double tau = 0.01;
    std::int64_t n_samples = 0;
    std::int64_t uncertainty_samples = 10000;
    std::uint64_t run_seed = 0;
    std::int64_t round = 0;
    const std::function<void(const SplitDecision&)>* on_mark = nullptr;
    std::mutex* observer_mutex = nullptr;
};

std::uint64_t node_seed(const EvalContext& ctx, SeedPurpose purpose,
                        std::int64_t id) {
    return mix_seed(ctx.run_seed, static_cast<std::uint64_t>(purpose),
                    static_cast<std::uint64_t>(id),
                    static_cast<std::uint64_t>(ctx.round));
}

SplitChoice choose_split(const EvalContext& ctx, const LinearBoundsSet& bounds,
                         const ConstraintSet& constraints, std::int64_t id) {
    SplitChoice choice;
    if (ctx.strategy == StrategyKind::Ordered) {
        choice = select_ordered(bounds, constraints);
    } else {
        choice = select_babsr_prob(bounds, constraints, *ctx.net, *ctx.gaussian,
                                   *ctx.domain, ctx.tau, ctx.uncertainty_samples,
                                   node_seed(ctx, SeedPurpose::UncertaintyEstimate, id));
    }
    if (ctx.on_mark && *ctx.on_mark) {
        std::lock_guard<std::mutex> lock(*ctx.observer_mutex);
        SplitDecision d;
        d.branch_id = id;
        d.choice = choice;
        d.strategy = ctx.strategy;
        d.bounds = &bounds;
        d.constraints = &constraints;
        (*ctx.on_mark)(d);
    }
    return choice;
}

// Bound, estimate (leaves only), and mark one node. Marking runs while the
// node's linear bounds are still in memory; only the event rows survive
// into the stored branch.
NodeEval evaluate_node(const EvalContext& ctx, const ConstraintSet& constraints,
                       std::int64_t id, bool leaf) {
    NodeEval out;
    out.branch.branch_id = id;
    out.branch.constraints = constraints;
    const LinearBoundsSet bounds =
        compute_linear_bounds(*ctx.net, ctx.domain->box, constraints);

    int unstable = 0;
    for (int k = 1; k < ctx.net->depth(); ++k)
        for (int j = 0; j < ctx.net->width(k); ++j)
            if (is_unstable(bounds, constraints, k, j))
                ++unstable;
    out.unstable_count = unstable;

    if (!leaf && unstable > 0) {
        const SplitChoice choice = choose_split(ctx, bounds, constraints, id);
        out.is_leaf = false;
        out.split_on = {choice.layer, choice.neuron};
        return out;
    }

    BranchProbabilities probs = bound_branch_probability(
        bounds, constraints, *ctx.gaussian, *ctx.domain, ctx.n_samples,
        node_seed(ctx, SeedPurpose::BranchEstimate, id));
    out.branch.p_lower = probs.lower;
    out.branch.p_upper = probs.upper;
    out.branch.lower_event = std::move(probs.lower_event);
    out.branch.upper_event = std::move(probs.upper_event);
    if (out.branch.gap() > 0.0 && unstable > 0) {
        const SplitChoice choice = choose_split(ctx, bounds, constraints, id);
        out.branch.marked_split = {choice.layer, choice.neuron};
    }
    return out;
}

std::int64_t default_uncertainty_samples(std::int64_t n_samples) {
    return std::max<std::int64_t>(n_samples / 10, 10000);
}

class Engine {
  public:
    Engine(const ProblemInstance& problem, const EngineOptions& options,
           bool allow_splits)
        : net_(problem.network),
          gaussian_(problem.input_mean, problem.input_cov),
          domain_(make_truncation_domain(gaussian_, problem.truncation_z)),
          opts_(options), allow_splits_(allow_splits), eta_(problem.eta),
          current_n_(options.budget.n_samples) {
        if (net_.output_dim() != 1)
            throw Error(ErrorCode::InvalidArgument,
                        "verification requires a folded scalar network");
        if (current_n_ < 1)
            throw Error(ErrorCode::InvalidArgument, "n_samples must be >= 1");
        if (opts_.budget.split_depth < 1)
            throw Error(ErrorCode::InvalidArgument, "split_depth must be >= 1");
        if (opts_.budget.batch_size < 1)
            throw Error(ErrorCode::InvalidArgument, "batch_size must be >= 1");
    }

    VerificationReport run() {
        start_ = Clock::now();
        NodeEval root = evaluate_node(context(), ConstraintSet{}, next_id_++,
                                      /*leaf=*/true);
        const int root_unstable = root.unstable_count;
        split_cap_ = root_unstable >= 62 ? std::numeric_limits<std::int64_t>::max()
                                         : (std::int64_t{1} << root_unstable);
        pool_.insert(std::move(root.branch));

        const std::int64_t sample_cap = opts_.budget.max_samples > 0
                                            ? opts_.budget.max_samples
                                            : 128 * opts_.budget.n_samples;
        while (true) {
            ++iteration_;
            const GlobalBounds raw = bound_global_probability(pool_);
            const double p_lower = clamp01(raw.lower);
            const double p_upper = clamp01(raw.upper + domain_.delta);

            // Termination needs both the empirical verdict and its
            // certificate.
            std::optional<Verdict> held;
            double confidence = 0.0;
            if (p_lower >= eta_)
                held = Verdict::True;
            else if (p_upper < eta_)
                held = Verdict::False;
            if (held) {
                confidence = current_confidence(*held);
                if (confidence >= opts_.target_confidence) {
                    emit_iteration(raw, std::nullopt);
                    return finish(*held, confidence, raw);
                }
            }

            if (time_exceeded()) {
                emit_iteration(raw, std::nullopt);
                return finish(held ? *held : Verdict::Timeout, confidence, raw);
            }

            // A sub-target verdict has two levers: splitting, which widens
            // the certificate margin by tightening bounds, and doubling the
            // sample count. Neither lever's requirement is knowable ahead,
            // so race them on accumulated cost (sample evaluations): total
            // certification work stays within ~2x the cheaper lever.
            const bool splittable =
                allow_splits_ && pool_.peek_max_gap().gap() > 0.0;
            const bool can_double = held && 2 * current_n_ <= sample_cap;
            bool escalate = false;
            if (can_double) {
                if (!splittable) {
                    escalate = true;
                } else {
                    const std::int64_t split_next =
                        (std::int64_t{1} << opts_.budget.split_depth) * current_n_;
                    const std::int64_t double_next =
                        2 * static_cast<std::int64_t>(pool_.size()) *
                        (2 * current_n_);
                    escalate = certify_double_cost_ + double_next <=
                               certify_split_cost_ + split_next;
                }
            }

            if (escalate) {
                emit_iteration(raw, std::nullopt);
                ++round_;
                current_n_ *= 2;
                certify_double_cost_ +=
                    2 * static_cast<std::int64_t>(pool_.size()) * current_n_;
                reestimate_pool();
                continue;
            }

            if (!splittable) {
                emit_iteration(raw, std::nullopt);
                if (held) // both levers exhausted: sub-target certificate
                    return finish(*held, confidence, raw);
                // All branches exact yet undecided: eta sits inside the
                // residual truncation band. Nothing more to do.
                return finish(Verdict::Timeout, 0.0, raw);
            }

            if (held)
                certify_split_cost_ +=
                    (std::int64_t{1} << opts_.budget.split_depth) * current_n_;
            emit_iteration(raw, pool_.peek_max_gap().gap());
            Branch parent = pool_.pop_max_gap();
            if (!parent.marked_split)
                remark(parent); // estimates moved after insertion; rare path
            expand(std::move(parent));
        }
    }

  private:
    EvalContext context() {
        EvalContext ctx;
        ctx.net = &net_;
        ctx.gaussian = &gaussian_;
        ctx.domain = &domain_;
        ctx.strategy = opts_.strategy;
        ctx.tau = opts_.tau;
        ctx.n_samples = current_n_;
        ctx.uncertainty_samples = default_uncertainty_samples(opts_.budget.n_samples);
        ctx.run_seed = opts_.seed;
        ctx.round = round_;
        ctx.on_mark = &opts_.on_mark;
        ctx.observer_mutex = &observer_mutex_;
        return ctx;
    }

    bool time_exceeded() const {
        if (opts_.budget.time_limit_s <= 0.0)
            return false;
        return std::chrono::duration<double>(Clock::now() - start_).count() >
               opts_.budget.time_limit_s;
    }

    void emit_iteration(const GlobalBounds& raw, std::optional<double> popped_gap) {
        if (!opts_.on_iteration)
            return;
        IterationInfo info;
        info.iteration = iteration_;
        info.raw = raw;
        info.delta = domain_.delta;
        info.p_lower = clamp01(raw.lower);
        info.p_upper = clamp01(raw.upper + domain_.delta);
        info.pool = &pool_;
        info.popped_gap = popped_gap;
        opts_.on_iteration(info);
    }

    void remark(Branch& branch) {
        const LinearBoundsSet bounds =
            compute_linear_bounds(net_, domain_.box, branch.constraints);
        bool any = false;
        for (int k = 1; k < net_.depth() && !any; ++k)
            for (int j = 0; j < net_.width(k); ++j)
                if (is_unstable(bounds, branch.constraints, k, j)) {
                    any = true;
                    break;
                }
        if (!any)
            throw Error(ErrorCode::Internal,
                        "positive-gap branch with no unstable preactivation");
        const SplitChoice c =
            choose_split(context(), bounds, branch.constraints, branch.branch_id);
        branch.marked_split = {c.layer, c.neuron};
    }

    struct Pending {
        ConstraintSet constraints;
        std::int64_t id = 0;
        std::pair<int, int> split_on;
    };

    // Expand a popped branch `split_depth` levels deep. Intermediate levels
    // get bounds and a strategy choice only; leaves are estimated and
    // inserted. One wave's children are evaluated concurrently.
    void expand(Branch parent) {
        std::vector<Pending> level{{std::move(parent.constraints), parent.branch_id,
                                    *parent.marked_split}};
        std::vector<NodeEval> leaves;
        for (int depth = 1; depth <= opts_.budget.split_depth && !level.empty();
             ++depth) {
            const bool leaf_level = depth == opts_.budget.split_depth;
            struct ChildSpec {
                ConstraintSet constraints;
                std::int64_t id;
            };
            std::vector<ChildSpec> specs;
            specs.reserve(level.size() * 2);
            for (const Pending& node : level) {
                ++splits_;
                const auto [k, j] = node.split_on;
                specs.push_back(
                    {node.constraints.with(k, j, SignConstraint::GeqZero), next_id_++});
                specs.push_back(
                    {node.constraints.with(k, j, SignConstraint::LtZero), next_id_++});
            }
            if (splits_ > split_cap_)
                throw Error(ErrorCode::Internal,
                            "split count exceeded 2^U hard cap (engine bug)");

            const EvalContext ctx = context();
            std::vector<NodeEval> results(specs.size());
            parallel_for(specs.size(), opts_.budget.batch_size, [&](std::size_t i) {
                results[i] =
                    evaluate_node(ctx, specs[i].constraints, specs[i].id, leaf_level);
            });

            level.clear();
            for (NodeEval& r : results) {
                if (r.is_leaf)
                    leaves.push_back(std::move(r));
                else
                    level.push_back({std::move(r.branch.constraints),
                                     r.branch.branch_id, *r.split_on});
            }
        }
        for (NodeEval& leaf : leaves)
            pool_.insert(std::move(leaf.branch));
    }

    double current_confidence(Verdict verdict) const {
        std::vector<double> values;
        values.reserve(pool_.size());
        for (const Branch& b : pool_.branches())
            values.push_back(verdict == Verdict::True ? b.p_lower.value
                                                      : b.p_upper.value);
        // The truncation deficit is charged to the upper bound, so the
        // FALSE certificate targets eta - delta on the raw sums.
        const double eta_eff = verdict == Verdict::True ? eta_ : eta_ - domain_.delta;
        return bernstein_confidence(values, current_n_, eta_eff,
                                    verdict == Verdict::True
                                        ? CertificateSide::Lower
                                        : CertificateSide::Upper);
    }

    // Re-estimate every branch from its stored events with the current
    // sample count and fresh derived seeds.
    void reestimate_pool() {
        const EvalContext ctx = context();
        std::vector<Branch>& branches = pool_.branches();
        parallel_for(branches.size(), opts_.budget.batch_size, [&](std::size_t i) {
            Branch& b = branches[i];
            const LinearEvent evs[] = {b.lower_event, b.upper_event};
            auto est = estimate_events_shared(
                evs, gaussian_, domain_, current_n_,
                node_seed(ctx, SeedPurpose::BranchEstimate, b.branch_id));
            b.p_lower = est[0];
            b.p_upper = est[1];
        });
    }

    VerificationReport finish(Verdict verdict, double confidence,
                              const GlobalBounds& raw) {
        VerificationReport r;
        r.verdict = verdict;
        r.p_lower = clamp01(raw.lower);
        r.p_upper = clamp01(raw.upper + domain_.delta);
        r.confidence = confidence;
        r.splits = splits_;
        r.branches_final = static_cast<std::int64_t>(pool_.size());
        r.wall_time_s = std::chrono::duration<double>(Clock::now() - start_).count();
        r.seed = opts_.seed;
        r.strategy = allow_splits_ ? strategy_name(opts_.strategy) : "no-split";
        r.n_samples_final = current_n_;
        r.eta = eta_;
        return r;
    }

    const Network& net_;
    GaussianInput gaussian_;
    TruncationDomain domain_;
    EngineOptions opts_;
    bool allow_splits_;
    double eta_;

    BranchPool pool_;
    std::int64_t next_id_ = 0;
    std::int64_t splits_ = 0;
    std::int64_t split_cap_ = 0;
    std::int64_t iteration_ = 0;
    std::int64_t current_n_;
    std::int64_t round_ = 0;
    std::int64_t certify_split_cost_ = 0;
    std::int64_t certify_double_cost_ = 0;
    Clock::time_point start_;
    std::mutex observer_mutex_;
};

} // namespace

VerificationReport verify(const ProblemInstance& problem,
                          const EngineOptions& options) {
    Engine engine(problem, options, /*allow_splits=*/true);
    return engine.run();
}

VerificationReport verify_no_split(const ProblemInstance& problem,
                                   const Budget& budget, std::uint64_t seed) {
    EngineOptions options;
    options.budget = budget;
    options.seed = seed;
    Engine engine(problem, options, /*allow_splits=*/false);
    return engine.run();
}

std::pair<Branch, Branch> split_branch(const Branch& parent, const SplitContext& ctx,
                                       std::int64_t child_id_geq,
                                       std::int64_t child_id_lt) {
    if (!parent.marked_split)
        throw Error(ErrorCode::Precondition, "parent branch carries no marked split");
    if (!ctx.network || !ctx.gaussian || !ctx.domain)
        throw Error(ErrorCode::InvalidArgument, "split context is incomplete");

    EvalContext ec;
    ec.net = ctx.network;
    ec.gaussian = ctx.gaussian;
    ec.domain = ctx.domain;
    ec.strategy = ctx.strategy;
    ec.tau = ctx.tau;
    ec.n_samples = ctx.n_samples;
    ec.uncertainty_samples = default_uncertainty_samples(ctx.n_samples);
    ec.run_seed = ctx.run_seed;

    const auto [k, j] = *parent.marked_split;
    NodeEval geq = evaluate_node(
        ec, parent.constraints.with(k, j, SignConstraint::GeqZero), child_id_geq,
        /*leaf=*/true);
    NodeEval lt = evaluate_node(
        ec, parent.constraints.with(k, j, SignConstraint::LtZero), child_id_lt,
        /*leaf=*/true);
    return {std::move(geq.branch), std::move(lt.branch)};
}

} // namespace pv
