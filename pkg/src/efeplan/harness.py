"""Receding-horizon trial loop, multi-trial experiments, and CSV emission.

One trial: reset the environment, then at every decision time infer the
preference posterior, score every remaining policy under the agent's
objective, marginalize the policy posterior onto the next action, execute it,
and record everything. Experiments repeat trials with per-trial RNG substreams
derived statelessly from (master_seed, agent_index, trial_index), so results
are independent of execution order and reruns are byte-identical.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .envs import Environment, make_environment
from .inference import MarginalBeliefs, filter_and_smooth, preferential_inference
from .maths import softmax
from .model import Categorical, GenerativeModel, History
from .planning import (
    EfeBreakdown,
    ObjectiveKind,
    SelectionMode,
    action_marginal,
    policy_scores,
    select_action,
)

DEFAULT_SELECTION = {
    ObjectiveKind.EXPECTED_FREE_ENERGY: SelectionMode.ARGMAX,
    ObjectiveKind.INFO_GAIN_ONLY: SelectionMode.ARGMAX,
    ObjectiveKind.REWARD_PLUS_INFO_GAIN: SelectionMode.ARGMAX,
    # The pure reward maximizer faces all-tied objectives before any
    # information arrives; sampling its ties is the comparison protocol.
    ObjectiveKind.EXPECTED_REWARD: SelectionMode.SAMPLE,
}

FLOAT_FMT = "%.12g"


class ConfigError(ValueError):
    """The experiment configuration is structurally invalid."""


class TrialError(RuntimeError):
    """An inference or environment failure, annotated with its trial context."""


@dataclass(frozen=True)
class AgentSpec:
    kind: ObjectiveKind
    selection: SelectionMode

    @property
    def name(self) -> str:
        return self.kind.value


@dataclass(frozen=True)
class ExperimentConfig:
    environment: str = "tmaze"
    env_overrides: dict = field(default_factory=dict)
    agents: tuple[AgentSpec, ...] = ()
    gamma: float = 1.0
    n_trials: int = 1
    master_seed: int = 0
    reward_per_obs: tuple[float, ...] | None = None
    output_dir: str | None = None

    def __post_init__(self):
        if self.n_trials < 1:
            raise ConfigError("n_trials must be >= 1")
        if not self.gamma > 0:
            raise ConfigError("gamma must be > 0")
        if not self.agents:
            raise ConfigError("at least one agent is required")


def config_from_dict(doc: dict) -> ExperimentConfig:
    """Parse a configuration document, applying per-agent selection defaults."""
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a single top-level object")
    env = doc.get("environment", {})
    if isinstance(env, str):
        env = {"name": env}
    if not isinstance(env, dict) or "name" not in env:
        raise ConfigError("environment must name an environment")

    agents_field = doc.get("agents")
    if not agents_field or not isinstance(agents_field, list):
        raise ConfigError("agents must be a non-empty list")
    selection_overrides = doc.get("selection", {})
    agents = []
    for entry in agents_field:
        if isinstance(entry, str):
            kind_name, sel_name = entry, None
        elif isinstance(entry, dict) and "kind" in entry:
            kind_name, sel_name = entry["kind"], entry.get("selection")
        else:
            raise ConfigError(f"bad agent entry: {entry!r}")
        try:
            kind = ObjectiveKind(kind_name)
        except ValueError as exc:
            raise ConfigError(f"unknown agent kind: {kind_name!r}") from exc
        sel_name = sel_name or selection_overrides.get(kind_name)
        if sel_name is None:
            selection = DEFAULT_SELECTION[kind]
        else:
            try:
                selection = SelectionMode(sel_name)
            except ValueError as exc:
                raise ConfigError(f"unknown selection mode: {sel_name!r}") from exc
        agents.append(AgentSpec(kind=kind, selection=selection))

    reward = doc.get("reward_per_obs")
    try:
        return ExperimentConfig(
            environment=env["name"],
            env_overrides=env.get("overrides", {}),
            agents=tuple(agents),
            gamma=float(doc.get("gamma", 1.0)),
            n_trials=int(doc.get("n_trials", 1)),
            master_seed=int(doc.get("master_seed", 0)),
            reward_per_obs=tuple(float(r) for r in reward) if reward is not None else None,
            output_dir=doc.get("output_dir"),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad config value: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed config document: {exc}") from exc
    return config_from_dict(doc)


@dataclass(frozen=True, eq=False)
class BeliefTrace:
    """Beliefs over every timestep 0..T, held at each decision time.

    held_at[t] are the marginals the agent held when choosing action t+1
    (future entries are predictive under its greedy plan); the final entry is
    the post-trial smoothed posterior over the whole trajectory.
    """

    held_at: tuple[MarginalBeliefs, ...]


@dataclass(frozen=True, eq=False)
class TrialRecord:
    trial_index: int
    agent: ObjectiveKind
    context: int
    observations: tuple[int, ...]
    actions: tuple[int, ...]
    score: float
    action_marginals: tuple[np.ndarray, ...]
    policy_probs: tuple[np.ndarray, ...]
    efe_rows: tuple[tuple[EfeBreakdown, ...], ...] | None


def derive_rng(master_seed: int, agent_index: int, trial_index: int) -> np.random.Generator:
    """Stateless per-trial substream; independent of trial execution order."""
    return np.random.default_rng(
        np.random.SeedSequence([int(master_seed), int(agent_index), int(trial_index)])
    )


def run_trial(
    model: GenerativeModel,
    env: Environment,
    kind: ObjectiveKind,
    gamma: float,
    mode: SelectionMode,
    rng: np.random.Generator,
    reward_per_obs: np.ndarray | None = None,
    trial_index: int = 0,
) -> tuple[TrialRecord, BeliefTrace]:
    """Run one receding-horizon episode of the given agent against the environment."""
    if reward_per_obs is None:
        reward_per_obs = model.preferences.obs_log_pref
    observations = [int(env.reset(rng))]
    context = env.ground_truth() % 2
    actions: list[int] = []
    marginals: list[np.ndarray] = []
    policy_probs: list[np.ndarray] = []
    efe_rows: list[tuple[EfeBreakdown, ...]] = []
    held_at: list[MarginalBeliefs] = []

    try:
        done = False
        while not done:
            history = History(tuple(observations), tuple(actions))
            preferential_inference(model, history)
            policies, scores, rows = policy_scores(model, history, kind, reward_per_obs)
            probs = softmax(gamma * scores)
            posterior_marginal = _first_action_marginal(policies, probs, model.n_actions)
            action = select_action(posterior_marginal, mode, rng)

            marginals.append(posterior_marginal.probs.copy())
            policy_probs.append(probs.copy())
            if kind is ObjectiveKind.EXPECTED_FREE_ENERGY:
                efe_rows.append(tuple(rows))
            greedy = policies[int(np.argmax(probs))]
            held_at.append(filter_and_smooth(model, history, greedy))

            obs, done = env.step(action)
            actions.append(int(action))
            observations.append(int(obs))
    except (ValueError, RuntimeError) as exc:
        raise TrialError(
            f"trial {trial_index}, agent {kind.value!r}: {exc}"
        ) from exc

    held_at.append(filter_and_smooth(model, History(tuple(observations), tuple(actions))))
    score = float(env.score(observations, actions))
    record = TrialRecord(
        trial_index=trial_index,
        agent=kind,
        context=int(context),
        observations=tuple(observations),
        actions=tuple(actions),
        score=score,
        action_marginals=tuple(marginals),
        policy_probs=tuple(policy_probs),
        efe_rows=tuple(efe_rows) if efe_rows else None,
    )
    return record, BeliefTrace(held_at=tuple(held_at))


def _first_action_marginal(policies, probs, n_actions) -> Categorical:
    marginal = np.zeros(n_actions)
    for policy, p in zip(policies, probs):
        marginal[policy.actions[0]] += p
    return Categorical(marginal / marginal.sum())


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    config: ExperimentConfig
    records: dict[str, list[TrialRecord]]
    traces: dict[str, list[BeliefTrace]]
    summary: dict


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run n_trials independent trials per configured agent and summarize scores."""
    records: dict[str, list[TrialRecord]] = {}
    traces: dict[str, list[BeliefTrace]] = {}
    summary_agents = {}
    for agent_index, spec in enumerate(config.agents):
        agent_records = []
        agent_traces = []
        for trial in range(config.n_trials):
            model, env = make_environment(config.environment, config.env_overrides)
            rng = derive_rng(config.master_seed, agent_index, trial)
            record, trace = run_trial(
                model,
                env,
                spec.kind,
                config.gamma,
                spec.selection,
                rng,
                reward_per_obs=(
                    np.asarray(config.reward_per_obs, dtype=float)
                    if config.reward_per_obs is not None
                    else None
                ),
                trial_index=trial,
            )
            agent_records.append(record)
            agent_traces.append(trace)
        records[spec.name] = agent_records
        traces[spec.name] = agent_traces

        scores = [r.score for r in agent_records]
        cumulative = list(np.cumsum(scores))
        mean = float(np.mean(scores))
        std_error = (
            float(np.std(scores, ddof=1) / np.sqrt(len(scores))) if len(scores) > 1 else 0.0
        )
        summary_agents[spec.name] = {
            "scores": scores,
            "cumulative": [float(c) for c in cumulative],
            "mean": mean,
            "std_error": std_error,
        }
    summary = {
        "environment": config.environment,
        "n_trials": config.n_trials,
        "master_seed": config.master_seed,
        "gamma": config.gamma,
        "agents": summary_agents,
    }
    return ExperimentResult(config=config, records=records, traces=traces, summary=summary)


def write_outputs(result: ExperimentResult, output_dir) -> list[Path]:
    """Emit trials.csv, beliefs.csv, efe.csv and summary.json deterministically."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    fmt = lambda x: FLOAT_FMT % float(x)  # noqa: E731

    trials_path = out / "trials.csv"
    with open(trials_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("trial,agent,context,t,action,observation,score_so_far\n")
        for name, agent_records in result.records.items():
            running = 0.0
            for rec in agent_records:
                running += rec.score
                for t, (a, o) in enumerate(zip(rec.actions, rec.observations[1:])):
                    fh.write(
                        f"{rec.trial_index},{name},{rec.context},{t},{a},{o},{fmt(running)}\n"
                    )

    beliefs_path = out / "beliefs.csv"
    with open(beliefs_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("trial,agent,decision_time,belief_time,state,probability\n")
        for name, agent_traces in result.traces.items():
            for trial, trace in enumerate(agent_traces):
                for dt, beliefs in enumerate(trace.held_at):
                    for bt in range(len(beliefs)):
                        probs = beliefs[bt].probs
                        for s in range(len(probs)):
                            fh.write(
                                f"{trial},{name},{dt},{bt},{s},{fmt(probs[s])}\n"
                            )

    efe_path = out / "efe.csv"
    with open(efe_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(
            "trial,t,policy_index,total,risk,ambiguity,extrinsic,intrinsic,residual\n"
        )
        for agent_records in result.records.values():
            for rec in agent_records:
                if rec.efe_rows is None:
                    continue
                for t, rows in enumerate(rec.efe_rows):
                    for idx, row in enumerate(rows):
                        cells = ",".join(fmt(v) for v in row.as_row())
                        fh.write(f"{rec.trial_index},{t},{idx},{cells}\n")

    summary_path = out / "summary.json"
    with open(summary_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(result.summary, fh, indent=1, sort_keys=True)
        fh.write("\n")

    return [trials_path, beliefs_path, efe_path, summary_path]
