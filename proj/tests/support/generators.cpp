// SPDX-License-Identifier: Apache-2.0
#include "generators.hpp"

#include <algorithm>
#include <set>

namespace gen
{

using namespace tabreason;

namespace
{

bool chance(Rng& rng, double p)
{
    return std::bernoulli_distribution(p)(rng);
}

std::size_t below(Rng& rng, std::size_t n)
{
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

} // namespace

Trajectory valid_plan(Rng& rng)
{
    static const ToolId optional[] = {ToolId::RowLookup,         ToolId::ColumnLookup, ToolId::ContextExtractor,
                                      ToolId::SpanExtractor,     ToolId::KnowledgeRetrieval,
                                      ToolId::SolutionGenerator, ToolId::ScaleFinder};
    std::vector<std::vector<ToolId>> units;
    for (auto t: optional)
        if (chance(rng, 0.4))
            units.push_back({t});
    if (chance(rng, 0.6))
        units.push_back({ToolId::ProgramGeneratorAndVerifier, ToolId::ProgramExecutor});
    std::shuffle(units.begin(), units.end(), rng);
    Trajectory plan;
    for (const auto& u: units)
        plan.steps.insert(plan.steps.end(), u.begin(), u.end());
    plan.steps.push_back(ToolId::AnswerGenerator);
    return plan;
}

Trajectory any_plan(Rng& rng)
{
    Trajectory plan;
    auto n = below(rng, 9);
    for (std::size_t i = 0; i < n; ++i)
        plan.steps.push_back(all_tools[below(rng, all_tools.size())]);
    return plan;
}

bool plan_is_valid(const std::vector<ToolId>& steps)
{
    if (steps.empty() || steps.back() != ToolId::AnswerGenerator)
        return false;
    std::set<ToolId> seen(steps.begin(), steps.end());
    if (seen.size() != steps.size())
        return false;
    for (std::size_t i = 0; i < steps.size(); ++i)
    {
        if (steps[i] == ToolId::ProgramExecutor && (i == 0 || steps[i - 1] != ToolId::ProgramGeneratorAndVerifier))
            return false;
        if (steps[i] == ToolId::ProgramGeneratorAndVerifier
            && (i + 1 == steps.size() || steps[i + 1] != ToolId::ProgramExecutor))
            return false;
    }
    return true;
}

TrajectoryRecord record(Rng& rng, std::size_t index)
{
    TrajectoryRecord r;
    r.instance_id = "syn-" + std::to_string(index);
    r.dataset = static_cast<Dataset>(below(rng, 3));
    r.input.question = "Question " + std::to_string(index) + "?";
    r.input.context = chance(rng, 0.5) ? "Context line for " + std::to_string(index) + "." : "";
    r.input.table.rows = {{"Name", "Value"}, {"a", std::to_string(index)}, {"b", std::to_string(index * 7 % 13)}};
    r.plan = valid_plan(rng);
    bool positive = chance(rng, 0.5);
    std::size_t stop = r.plan.steps.size();
    if (!positive && chance(rng, 0.3))
    {
        stop = below(rng, r.plan.steps.size());
        static const FailureKind kinds[] = {FailureKind::BackendError, FailureKind::ParseError, FailureKind::ExecError};
        r.failure = FailureReason {kinds[below(rng, 3)], stop, "synthetic failure"};
    }
    ToolState state = r.input;
    for (std::size_t k = 0; k < stop; ++k)
    {
        ToolState next = state;
        if (r.plan.steps[k] == ToolId::AnswerGenerator)
            next.answer.payload = FinalAnswer {AnswerKind::numeric, Rational(static_cast<long>(index)), Scale::none,
                                               std::to_string(index)};
        else
            next.answer.payload = SolutionText {"step " + std::to_string(k) + ". The answer is " + std::to_string(index)};
        r.steps.push_back(StepRecord {r.plan.steps[k], state, next, std::nullopt});
        state = std::move(next);
    }
    if (!r.failure)
        r.predicted = std::get<FinalAnswer>(state.answer.payload);
    r.label = positive ? WeakLabel::positive : WeakLabel::negative;
    return r;
}

std::vector<TrajectoryRecord> records(Rng& rng, std::size_t count)
{
    std::vector<TrajectoryRecord> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i)
        out.push_back(record(rng, i));
    return out;
}

} // namespace gen
